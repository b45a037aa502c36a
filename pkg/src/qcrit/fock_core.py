"""Truncated Fock-space engine.

Ladder operators, Hamiltonian builders for the light-matter models used
throughout the package, dense exact diagonalization with a cutoff-halving
convergence margin, fixed-step RK4 time evolution, and the
fidelity-susceptibility quantum Fisher information.  Everything else in the
package is checked against these brute-force routines.

Conventions: hbar = 1.  Composite spaces are ordered spin (x) boson, so the
boson index runs fastest and ``index = s * dim_boson + n``.  Spin bases list
the magnetic quantum number from +j down to -j, i.e. |up> first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateGroundStateError,
    DomainError,
    InvalidDimensionError,
    NumericalError,
    StepSizeError,
    UnstableDerivativeError,
)

KINDS = ("JC", "Rabi", "Dicke", "TwoPhotonDicke", "DSC")
_ALIASES = {
    "jc": "JC",
    "rabi": "Rabi",
    "dicke": "Dicke",
    "twophotondicke": "TwoPhotonDicke",
    "two-photon-dicke": "TwoPhotonDicke",
    "two-photon-rabi": "TwoPhotonDicke",
    "twophotonrabi": "TwoPhotonDicke",
    "dsc": "DSC",
    "dsc-interaction": "DSC",
}


def canonical_kind(kind: str) -> str:
    if kind in KINDS:
        return kind
    try:
        return _ALIASES[kind.lower()]
    except KeyError:
        raise DomainError(f"unknown Hamiltonian kind {kind!r}") from None


@dataclass(frozen=True)
class ModelParams:
    """Primary model parameters; every ratio is derived on access."""

    omega: float
    Omega: float
    g: float
    n_qubits: int = 1

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError("omega must be > 0")
        if self.Omega < 0 or self.g < 0:
            raise DomainError("Omega and g must be >= 0")
        if int(self.n_qubits) != self.n_qubits or self.n_qubits < 1:
            raise DomainError("n_qubits must be a positive integer")

    @property
    def eta(self) -> float:
        return self.Omega / self.omega

    @property
    def eta_tilde(self) -> float:
        return self.n_qubits * self.Omega / self.omega

    def g_p(self, kind: str = "Rabi") -> float:
        """Critical coupling of the given model family."""
        kind = canonical_kind(kind)
        if kind == "TwoPhotonDicke":
            return np.sqrt(self.omega * self.Omega * self.n_qubits / 4.0)
        return np.sqrt(self.omega * self.Omega) / 2.0

    def lam(self, kind: str = "Rabi") -> float:
        gp = self.g_p(kind)
        return np.inf if gp == 0 else self.g / gp

    def replace(self, **changes) -> "ModelParams":
        d = dict(omega=self.omega, Omega=self.Omega, g=self.g, n_qubits=self.n_qubits)
        d.update(changes)
        return ModelParams(**d)

    @classmethod
    def from_lambda(cls, lam, eta, omega=1.0, kind="Rabi", n_qubits=1):
        Omega = eta * omega
        p = cls(omega, Omega, 0.0, n_qubits)
        return p.replace(g=lam * p.g_p(kind))


@dataclass(frozen=True)
class TruncatedOperator:
    dim_boson: int
    dim_spin: int
    matrix: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        n = self.dim_boson * self.dim_spin
        if self.matrix.shape != (n, n):
            raise InvalidDimensionError(
                f"matrix shape {self.matrix.shape} does not match {self.dim_spin}x{self.dim_boson}"
            )
        if self.hermitian:
            dev = np.max(np.abs(self.matrix - self.matrix.conj().T)) if n else 0.0
            assert dev <= 1e-12 * max(1.0, np.max(np.abs(self.matrix))), "non-Hermitian construction"

    @property
    def dim(self) -> int:
        return self.dim_boson * self.dim_spin

    def boson_index(self) -> np.ndarray:
        """Fock number of each basis state."""
        return np.tile(np.arange(self.dim_boson), self.dim_spin)

    def truncate(self, new_cutoff: int) -> "TruncatedOperator":
        """Principal submatrix on boson states |0>..|new_cutoff-1>.

        For Hamiltonians assembled from a, a^dagger, a^dagger a, a^2 and
        a^dagger^2 this equals the Hamiltonian built at the smaller cutoff.
        """
        keep = self.boson_index() < new_cutoff
        m = self.matrix[np.ix_(keep, keep)]
        return TruncatedOperator(new_cutoff, self.dim_spin, m, self.hermitian)


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cutoff: int
    convergence_margin: np.ndarray
    tolerance: float = 1e-8

    @property
    def converged(self) -> np.ndarray:
        return self.convergence_margin <= self.tolerance

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def build_boson_ops(cutoff: int):
    """Return (a, a_dagger, number) on the Fock states |0>..|cutoff-1>."""
    if int(cutoff) != cutoff or cutoff < 2:
        raise InvalidDimensionError("cutoff must be an integer >= 2")
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), 1)
    ad = a.T.copy()
    num = np.diag(np.arange(cutoff, dtype=float))
    return (
        TruncatedOperator(cutoff, 1, a),
        TruncatedOperator(cutoff, 1, ad),
        TruncatedOperator(cutoff, 1, num, hermitian=True),
    )


def spin_ops(n_qubits: int):
    """Collective spin (Jz, J+, J-) in the maximal sector j = n_qubits/2."""
    j = n_qubits / 2.0
    m = j - np.arange(n_qubits + 1)
    jp = np.zeros((n_qubits + 1, n_qubits + 1))
    for k in range(1, n_qubits + 1):
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    return np.diag(m), jp, jp.T.copy()


def _boson_matrices(cutoff):
    a, _, _ = build_boson_ops(cutoff)
    a = a.matrix
    return a, a.T, np.diag(np.arange(cutoff, dtype=float))


def build_hamiltonian(kind: str, p: ModelParams, cutoff: int) -> TruncatedOperator:
    """Dense Hamiltonian of the requested family on spin (x) Fock(cutoff).

    JC      w a'a + W Jz + (g/sqrt N)(J+ a + J- a')
    Rabi    w a'a + W/2 sz + g (a + a') sx                (N = 1 Dicke)
    Dicke   w a'a + W Jz + (2g/sqrt N)(a + a') Jx
    TwoPhotonDicke  w a'a + W Jz + (2g/N) Jx (a^2 + a'^2)
    DSC     w a'a + g (a + a') sx                          (qubit splitting dropped)
    """
    kind = canonical_kind(kind)
    a, ad, num = _boson_matrices(cutoff)
    n = 1 if kind in ("Rabi", "DSC") else p.n_qubits
    jz, jp, jm = spin_ops(n)
    jx = (jp + jm) / 2.0
    ib = np.eye(cutoff)
    isp = np.eye(n + 1)
    H = p.omega * np.kron(isp, num)
    if kind != "DSC":
        H = H + p.Omega * np.kron(jz, ib)
    if kind == "JC":
        H = H + p.g / np.sqrt(n) * (np.kron(jp, a) + np.kron(jm, ad))
    elif kind in ("Rabi", "Dicke", "DSC"):
        H = H + 2.0 * p.g / np.sqrt(n) * np.kron(jx, a + ad)
    else:
        H = H + 2.0 * p.g / n * np.kron(jx, a @ a + ad @ ad)
    return TruncatedOperator(cutoff, n + 1, H, hermitian=True)


def parity_operator(kind: str, p: ModelParams, cutoff: int) -> np.ndarray:
    """Symmetry generator of the family.

    One-photon models: exp(i pi (a'a + Jz + j)), the Z2 parity.
    Two-photon model: exp(i pi/2 a'a) (x) exp(i pi (Jz + j)), realizing
    a -> i a together with Jx -> -Jx.
    """
    kind = canonical_kind(kind)
    n = 1 if kind in ("Rabi", "DSC") else p.n_qubits
    spin_phase = np.exp(1j * np.pi * np.arange(n + 1))  # m = j - k, so Jz + j = n - k
    spin_phase = spin_phase[::-1]
    nb = np.arange(cutoff)
    boson_phase = np.exp(1j * np.pi * nb / (2 if kind == "TwoPhotonDicke" else 1))
    return np.diag(np.kron(spin_phase, boson_phase))


def diagonalize(H: TruncatedOperator, n_levels: int | None = None, tolerance: float = 1e-8) -> SpectrumResult:
    """Lowest eigenpairs plus |E_k(cutoff) - E_k(cutoff/2)| for each level."""
    if not H.hermitian:
        raise DomainError("diagonalize requires a Hermitian-flagged operator")
    n_levels = H.dim if n_levels is None else min(n_levels, H.dim)
    try:
        w, v = np.linalg.eigh(H.matrix)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(H.matrix)
        raise NumericalError(f"eigensolver failed (condition number {cond:.3e})") from exc
    half = H.dim_boson // 2
    if half >= 1 and half * H.dim_spin >= n_levels:
        w_half = np.linalg.eigvalsh(H.truncate(half).matrix)
        margin = np.abs(w[:n_levels] - w_half[:n_levels])
    else:
        margin = np.full(n_levels, np.inf)
    return SpectrumResult(w[:n_levels], v[:, :n_levels], H.dim_boson, margin, tolerance)


def ground_energy_margins(kind: str, p: ModelParams, cutoffs: Sequence[int]):
    """Ground energy and its cutoff-halving margin for each cutoff."""
    rows = []
    for c in cutoffs:
        s = diagonalize(build_hamiltonian(kind, p, c), 1)
        rows.append((c, float(s.eigenvalues[0]), float(s.convergence_margin[0])))
    return rows


def expectation(op: np.ndarray, psi: np.ndarray) -> complex:
    return complex(np.vdot(psi, op @ psi))


def quadrature_x2(psi: np.ndarray, dim_spin: int, cutoff: int) -> float:
    """<x^2> with x = a + a' on a spin (x) Fock state vector."""
    a, ad, _ = _boson_matrices(cutoff)
    x = np.kron(np.eye(dim_spin), a + ad)
    y = x @ psi
    return float(np.real(np.vdot(y, y)))


def _ground_state(kind, p, cutoff):
    H = build_hamiltonian(kind, p, cutoff)
    w, v = np.linalg.eigh(H.matrix)
    scale = np.max(np.abs(w))
    if w[1] - w[0] < 1e3 * np.finfo(float).eps * max(scale, 1.0):
        raise DegenerateGroundStateError(
            f"ground doublet splitting {w[1] - w[0]:.3e} too small for fidelity susceptibility"
        )
    return v[:, 0]


def _infidelity(psi_a, psi_b) -> float:
    """1 - |<a|b>| evaluated without cancellation."""
    ov = np.vdot(psi_a, psi_b)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    d = psi_a * phase - psi_b
    return 0.5 * float(np.real(np.vdot(d, d)))


def ground_state_qfi_numeric(kind, p: ModelParams, parameter="Omega", delta=None, cutoff=100, rtol=0.01):
    """Fidelity-susceptibility QFI of the ground state w.r.t. Omega or omega.

    QFI(d) = 8 (1 - |<psi(x-d)|psi(x+d)>|) / (2d)^2, evaluated at d and d/2.
    The two estimates must agree to ``rtol``; the Richardson combination
    (4 QFI(d/2) - QFI(d)) / 3 is returned.
    """
    if parameter not in ("Omega", "omega"):
        raise DomainError("parameter must be 'Omega' or 'omega'")
    x0 = getattr(p, parameter)
    if delta is None:
        delta = 1e-3 * x0
    if not 0 < delta < x0:
        raise DomainError("delta must satisfy 0 < delta < parameter value")

    def qfi(d):
        lo = _ground_state(kind, p.replace(**{parameter: x0 - d}), cutoff)
        hi = _ground_state(kind, p.replace(**{parameter: x0 + d}), cutoff)
        return 8.0 * _infidelity(lo, hi) / (2.0 * d) ** 2

    q1, q2 = qfi(delta), qfi(delta / 2.0)
    scale = max(abs(q1), abs(q2))
    if scale < 1e-14:
        return 0.0
    if abs(q1 - q2) > rtol * scale:
        raise UnstableDerivativeError(
            f"Richardson disagreement {abs(q1 - q2) / scale:.3%} exceeds {rtol:.0%}; reduce delta"
        )
    return (4.0 * q2 - q1) / 3.0


def qfi_from_generator_variance(psi: np.ndarray, generator: np.ndarray) -> float:
    """4 Var(G) for a pure state; the analytic reference for unitary families."""
    g1 = expectation(generator, psi)
    g2 = expectation(generator @ generator, psi)
    return float(4.0 * np.real(g2 - g1 * np.conj(g1)))


def operator_norm(H) -> float:
    m = H.matrix if isinstance(H, TruncatedOperator) else H
    if np.allclose(m, m.conj().T):
        w = np.linalg.eigvalsh(m)
        return float(max(abs(w[0]), abs(w[-1])))
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    norm_drift: float
    n_steps: int


def time_evolve(
    H_of_t: Callable[[float], np.ndarray] | np.ndarray | TruncatedOperator,
    psi0: np.ndarray,
    t_grid: Sequence[float],
    step_bound: float = 0.1,
    norm_bound: float | None = None,
    max_norm_drift: float = 1e-6,
) -> Trajectory:
    """Fixed-step RK4 propagation of i dpsi/dt = H(t) psi.

    The step is chosen so that ||H|| dt <= step_bound, with ||H|| taken from
    ``norm_bound`` or estimated at the grid points.  The norm is never
    renormalised; its drift is the accuracy diagnostic.
    """
    if isinstance(H_of_t, TruncatedOperator):
        H_of_t = H_of_t.matrix
    if isinstance(H_of_t, np.ndarray):
        Hc = H_of_t
        H_of_t = lambda t: Hc  # noqa: E731
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) < 0):
        raise DomainError("t_grid must be a non-decreasing 1-D sequence")
    if norm_bound is None:
        norm_bound = max(operator_norm(H_of_t(t)) for t in np.unique(t_grid[[0, -1]]))
    psi = np.asarray(psi0, dtype=complex).copy()
    n0 = np.linalg.norm(psi)
    out = np.empty((len(t_grid), psi.size), dtype=complex)
    out[0] = psi
    drift, steps = 0.0, 0
    for k in range(1, len(t_grid)):
        t0, t1 = t_grid[k - 1], t_grid[k]
        span = t1 - t0
        m = max(1, int(np.ceil(span * norm_bound / step_bound))) if span > 0 else 0
        dt = span / m if m else 0.0
        t = t0
        for _ in range(m):
            k1 = -1j * (H_of_t(t) @ psi)
            Hm = H_of_t(t + dt / 2)
            k2 = -1j * (Hm @ (psi + dt / 2 * k1))
            k3 = -1j * (Hm @ (psi + dt / 2 * k2))
            k4 = -1j * (H_of_t(t + dt) @ (psi + dt * k3))
            psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
        steps += m
        drift = max(drift, abs(np.linalg.norm(psi) - n0))
        if drift > max_norm_drift:
            raise StepSizeError(f"norm drift {drift:.2e} exceeds {max_norm_drift:.0e}; reduce step_bound")
        out[k] = psi
    return Trajectory(t_grid, out, drift, steps)


def propagate_exact(H: np.ndarray, psi0: np.ndarray, t_grid: Sequence[float]) -> np.ndarray:
    """Reference propagation through the eigenbasis of a constant H."""
    w, v = sla.eigh(H)
    c0 = v.conj().T @ psi0
    return np.array([v @ (np.exp(-1j * w * t) * c0) for t in t_grid])


def coherent_state(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff)
    from scipy.special import gammaln

    logamp = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) if alpha != 0 else np.where(n == 0, 0.0, -np.inf)
    psi = np.exp(logamp - abs(alpha) ** 2 / 2) * np.exp(1j * n * np.angle(alpha))
    return psi.astype(complex)
