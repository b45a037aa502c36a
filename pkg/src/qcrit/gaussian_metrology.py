"""Phase-space toolkit for two-mode Gaussian states and phase metrology.

States use the complex ordering ``A = (a_1, ..., a_q, a_1^dag, ..., a_q^dag)``
with symplectic form ``K = diag(1_q, -1_q)``.  A symplectic matrix ``G``
satisfies ``G K G^dag = K``; under a Gaussian unitary the moments transform
as ``d -> G d`` and ``sigma -> G sigma G^dag``.

Passive linear elements (phase shifters and beam splitters, abbreviated PLE)
are represented by a 2x2 unitary ``u`` acting on the annihilation operators,
embedded as ``blockdiag(u, u*)``.  The metrological channel used throughout is
the Mach-Zehnder relative phase, which in this frame is generated by the real
mode-mixing operator ``(a_1^dag a_2 - a_2^dag a_1)/i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import sqrtm

from .errors import DomainError, InvalidDimensionError, NumericalError, SchemaError

__all__ = [
    "GaussianState",
    "WilliamsonParams",
    "AdvantageReport",
    "symplectic_form",
    "R1",
    "R2",
    "B",
    "S1",
    "S2",
    "Ras",
    "symplectic_ops",
    "is_symplectic",
    "passive_matrix",
    "ple_euler",
    "symplectic_eigenvalues",
    "williamson_build",
    "williamson_decompose",
    "mean_photon_number",
    "qfi_isotropic",
    "qfi_matrix",
    "qfi_one_mode",
    "qfi_one_mode_general",
    "xp_to_complex",
    "one_mode_state",
    "phase_generator",
    "advantage_one_mode",
    "qfi_two_mode_explicit",
    "defpara",
    "ftql",
    "metrological_advantage",
    "optimal_one_mode_strategy",
    "convex_roof_advantage",
    "separability_check_n2",
    "state_from_json",
    "state_to_json",
]

PHYSICALITY_TOL = 1e-10
ISOTROPY_TOL = 1e-8

# 2x2 generators on the annihilation operators, halved so that they obey
# the SU(2) algebra.  ``exp(i phi M)`` acts on the vector (a_1, a_2).
_MX = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
_MY = np.array([[0.0, -0.5j], [0.5j, 0.0]])
_MZ = np.diag([0.5, -0.5]).astype(complex)
_SPIN = (_MX, _MY, _MZ)


def symplectic_form(q: int = 2) -> np.ndarray:
    return np.diag(np.concatenate([np.ones(q), -np.ones(q)]))


# --------------------------------------------------------------------------
# Elementary symplectic matrices (two modes)
# --------------------------------------------------------------------------

def R1(phi: float) -> np.ndarray:
    """Phase shift on mode 1."""
    return np.diag([np.exp(-1j * phi), 1.0, np.exp(1j * phi), 1.0])


def R2(phi: float) -> np.ndarray:
    """Phase shift on mode 2."""
    return np.diag([1.0, np.exp(-1j * phi), 1.0, np.exp(1j * phi)])


def Ras(phi: float) -> np.ndarray:
    """Antisymmetric phase shift ``R1(phi) R2(-phi)``."""
    return R1(phi) @ R2(-phi)


def B(theta: float) -> np.ndarray:
    """Real beam splitter mixing the two modes."""
    c, s = np.cos(theta), np.sin(theta)
    blk = np.array([[c, s], [-s, c]], dtype=complex)
    out = np.zeros((4, 4), dtype=complex)
    out[:2, :2] = blk
    out[2:, 2:] = blk
    return out


def _squeeze(xi: float, mode: int) -> np.ndarray:
    # The squeezer leaves the other mode untouched, so the untouched diagonal
    # entries are one.  Writing them as zero would break symplecticity.
    out = np.eye(4, dtype=complex)
    i, j = mode, mode + 2
    out[i, i] = out[j, j] = np.cosh(xi)
    out[i, j] = out[j, i] = -np.sinh(xi)
    return out


def S1(xi: float) -> np.ndarray:
    """Single-mode squeezer on mode 1."""
    return _squeeze(xi, 0)


def S2(xi: float) -> np.ndarray:
    """Single-mode squeezer on mode 2."""
    return _squeeze(xi, 1)


def symplectic_ops(phi1=0.0, phi2=0.0, theta=0.0, xi1=0.0, xi2=0.0, psi=0.0):
    """Return the matrices ``(R1, R2, B, S1, S2, Ras)`` for the given angles."""
    return R1(phi1), R2(phi2), B(theta), S1(xi1), S2(xi2), Ras(psi)


def is_symplectic(M: np.ndarray, tol: float = 1e-12) -> bool:
    K = symplectic_form(M.shape[0] // 2)
    return bool(np.max(np.abs(M @ K @ M.conj().T - K)) <= tol)


def passive_matrix(u: np.ndarray) -> np.ndarray:
    """Embed a mode unitary ``u`` as the symplectic ``blockdiag(u, u*)``."""
    u = np.asarray(u, dtype=complex)
    q = u.shape[0]
    out = np.zeros((2 * q, 2 * q), dtype=complex)
    out[:q, :q] = u
    out[q:, q:] = u.conj()
    return out


def _generator(direction: Sequence[float]) -> np.ndarray:
    """Phase-space generator of ``exp(i phi n.J)`` with ``J`` of unit weight.

    The Mach-Zehnder channel corresponds to ``direction = (0, 1, 0)``.  The
    factor two turns the halved SU(2) matrices into number-difference
    normalisation, so a coherent state of amplitude gamma gives 4|gamma|^2.
    """
    n = np.asarray(direction, dtype=float)
    M = 2.0 * sum(c * m for c, m in zip(n, _SPIN))
    return passive_matrix(1j * M)


MZ_DIRECTION = (0.0, 1.0, 0.0)


def ple_euler(a: float, b: float, c: float) -> np.ndarray:
    """Phase-space matrix of the PLE ``R_z(a) R_x(b) R_z(c)``.

    ``R_z(a)`` is the antisymmetric phase shift ``Ras(a/2)`` and ``R_x(b)``
    the real beam splitter ``B(b/2)``, so a full turn of the Euler angle is a
    half turn of the mode angle.
    """
    return Ras(a / 2) @ B(b / 2) @ Ras(c / 2)


# --------------------------------------------------------------------------
# States and the Williamson parameterization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianState:
    q: int
    sigma: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=complex)
        d = np.asarray(self.d, dtype=complex)
        q = self.q
        if sigma.shape != (2 * q, 2 * q) or d.shape != (2 * q,):
            raise DomainError(f"shape mismatch for q={q}: sigma {sigma.shape}, d {d.shape}")
        scale = max(1.0, float(np.max(np.abs(sigma))))
        if np.max(np.abs(sigma - sigma.conj().T)) > 1e-12 * scale:
            raise DomainError("covariance matrix is not Hermitian")
        A, Bm = sigma[:q, :q], sigma[:q, q:]
        if (np.max(np.abs(sigma[q:, q:] - A.conj())) > 1e-12 * scale
                or np.max(np.abs(sigma[q:, :q] - Bm.conj())) > 1e-12 * scale):
            raise DomainError("covariance matrix breaks the (a, a^dag) conjugation symmetry")
        if np.max(np.abs(d[q:] - d[:q].conj())) > 1e-12 * max(1.0, float(np.max(np.abs(d)))):
            raise DomainError("displacement halves are not complex conjugates")
        nu = symplectic_eigenvalues(sigma)
        if np.min(nu) < 1.0 - PHYSICALITY_TOL:
            raise DomainError(f"unphysical state: symplectic eigenvalue {np.min(nu):.6g} < 1")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "d", d)

    @property
    def gamma(self) -> np.ndarray:
        return self.d[: self.q]

    @property
    def nu(self) -> np.ndarray:
        return symplectic_eigenvalues(self.sigma)

    @property
    def is_isotropic(self) -> bool:
        nu = self.nu
        return bool(np.ptp(nu) <= ISOTROPY_TOL * max(1.0, nu.max()))

    def transform(self, G: np.ndarray) -> "GaussianState":
        return GaussianState(self.q, G @ self.sigma @ G.conj().T, G @ self.d)

    @classmethod
    def vacuum(cls, q: int = 2) -> "GaussianState":
        return cls(q, np.eye(2 * q, dtype=complex), np.zeros(2 * q, dtype=complex))


def symplectic_eigenvalues(sigma: np.ndarray) -> np.ndarray:
    """Symplectic spectrum from the eigenvalues of ``K sigma``.

    The eigenvalues come in pairs ``+-nu_i``.  The positive half is returned
    in ascending order.
    """
    q = sigma.shape[0] // 2
    ev = np.linalg.eigvals(symplectic_form(q) @ sigma)
    mags = np.sort(np.abs(ev.real))
    # each nu appears twice (once with each sign); take every second entry
    return mags[::2][:q] * 0.5 + mags[1::2][:q] * 0.5


@dataclass(frozen=True)
class WilliamsonParams:
    nu: float = 1.0
    phi1: float = 0.0
    phi2: float = 0.0
    theta: float = 0.0
    Psi: float = 0.0
    xi1: float = 0.0
    xi2: float = 0.0
    gamma_abs: float = 0.0
    l: float = 0.0
    phi_d1: float = 0.0
    phi_d2: float = 0.0

    def __post_init__(self):
        if self.nu < 1.0 - PHYSICALITY_TOL:
            raise DomainError(f"unphysical symplectic eigenvalue nu={self.nu}")
        if self.gamma_abs < 0:
            raise DomainError("gamma_abs must be non-negative")

    def replace(self, **kw) -> "WilliamsonParams":
        return replace(self, **kw)

    def passive(self) -> np.ndarray:
        return R1(self.phi1) @ R2(self.phi2) @ B(self.theta) @ Ras(self.Psi)

    def gamma(self) -> np.ndarray:
        return self.gamma_abs * np.array([
            np.exp(-1j * self.phi_d1) * np.cos(self.l),
            np.exp(-1j * self.phi_d2) * np.sin(self.l),
        ])


def williamson_build(p: WilliamsonParams) -> GaussianState:
    """``sigma = nu G G^dag`` with ``G = R1 R2 B Ras S1 S2`` and ``d = (gamma, gamma*)``."""
    G = p.passive() @ S1(p.xi1) @ S2(p.xi2)
    sigma = p.nu * G @ G.conj().T
    sigma = 0.5 * (sigma + sigma.conj().T)
    g = p.gamma()
    return GaussianState(2, sigma, np.concatenate([g, g.conj()]))


def _takagi_symmetric(Z: np.ndarray, tol: float = 1e-12):
    """Takagi factorization ``Z = u diag(s) u^T`` of a 2x2 complex symmetric matrix.

    Degenerate singular values are handled through the principal square root
    of the symmetric unitary factor.
    """
    _, sv, Vh = np.linalg.svd(Z)
    if sv[0] <= tol:
        return np.eye(2, dtype=complex), np.zeros(2)
    if abs(sv[0] - sv[1]) <= 1e-9 * sv[0]:
        T = Z / sv.mean()
        return sqrtm(T), np.full(2, sv.mean())
    V = Vh.conj().T
    u = np.zeros((2, 2), dtype=complex)
    # right singular vectors are conj(u_k) up to a phase; Z v then gives u_k
    # up to a phase e^{i b}, fixed from w^dag Z w* = e^{-2ib} s
    w = Z @ V[:, 0] / sv[0]
    c = np.vdot(w, Z @ w.conj())
    u[:, 0] = w * np.sqrt(c / abs(c))
    # the second column is the orthogonal complement of the first; dividing
    # by a small singular value would amplify rounding, so only its phase
    # and weight are read off Z
    w = np.array([-u[1, 0].conj(), u[0, 0].conj()])
    c = np.vdot(w, Z @ w.conj())
    s1 = abs(c)
    if s1 > tol * sv[0]:
        w = w * np.sqrt(c / s1)
    else:
        s1 = 0.0
    u[:, 1] = w
    return u, np.array([sv[0], s1])


def _passive_angles(u: np.ndarray):
    """Solve ``u = diag(e^{-i phi1}, e^{-i phi2}) B(theta) diag(e^{-i Psi}, e^{i Psi})``."""
    theta = float(np.arctan2(abs(u[0, 1]), abs(u[0, 0])))
    if abs(u[0, 0]) > 1e-12 and abs(u[0, 1]) > 1e-12:
        a = -np.angle(u[0, 0])  # phi1 + Psi
        b = -np.angle(u[0, 1])  # phi1 - Psi
        phi1 = 0.5 * (a + b)
        psi = 0.5 * (a - b)
        phi2 = -np.angle(-u[1, 0]) - psi
    elif abs(u[0, 1]) <= 1e-12:
        psi = 0.0
        phi1 = -np.angle(u[0, 0])
        phi2 = -np.angle(u[1, 1])
    else:
        psi = 0.0
        phi1 = -np.angle(u[0, 1])
        phi2 = -np.angle(-u[1, 0])
    return float(phi1), float(phi2), theta, float(psi)


def williamson_decompose(s: GaussianState) -> WilliamsonParams:
    """Recover isotropic Williamson parameters from a two-mode state.

    Gauge freedoms (column phases, the ordering of equal squeezers) mean the
    returned angles need not equal the ones used to build the state, but
    :func:`williamson_build` reproduces ``sigma`` and ``d``.
    """
    if s.q != 2:
        raise DomainError("decomposition is implemented for two modes")
    nu_pair = s.nu
    if not s.is_isotropic:
        raise DomainError(f"anisotropic state: symplectic eigenvalues {nu_pair}")
    nu = float(nu_pair.mean())
    P = s.sigma / nu
    # P = W S(2 xi) W^dag, whose upper-right block is -u diag(sinh 2 xi) u^T
    u, sh2 = _takagi_symmetric(-P[:2, 2:])
    xi = 0.5 * np.arcsinh(sh2)
    if np.max(sh2) <= 1e-13:
        # no squeezing: the passive part is invisible, pick the identity
        u = np.eye(2, dtype=complex)
    phi1, phi2, theta, psi = _passive_angles(u)
    g = s.gamma
    gamma_abs = float(np.linalg.norm(g))
    l = float(np.arctan2(abs(g[1]), abs(g[0])))
    phi_d1 = float(-np.angle(g[0])) if abs(g[0]) > 0 else 0.0
    phi_d2 = float(-np.angle(g[1])) if abs(g[1]) > 0 else 0.0
    return WilliamsonParams(nu=nu, phi1=phi1, phi2=phi2, theta=theta, Psi=psi,
                            xi1=float(xi[0]), xi2=float(xi[1]), gamma_abs=gamma_abs,
                            l=l, phi_d1=phi_d1, phi_d2=phi_d2)


def mean_photon_number(s: GaussianState) -> float:
    """``<N> = Tr[sigma]/4 - q/2 + |d|^2/2``."""
    return float(np.trace(s.sigma).real / 4 - s.q / 2 + np.vdot(s.d, s.d).real / 2)


# --------------------------------------------------------------------------
# Quantum Fisher information
# --------------------------------------------------------------------------

def qfi_isotropic(sigma, d, sigma_dot, d_dot, return_forms: bool = False):
    """QFI of an isotropic state under a channel that preserves nu.

    ``-Tr[(K sigma')^2] / (2(1+nu^2)) + 2 d'^dag sigma^{-1} d'``.  The
    equivalent ``nu^2 Tr[(sigma^{-1} sigma')^2]`` form is evaluated alongside
    and must agree to 1e-9 (relative).
    """
    sigma = np.asarray(sigma, dtype=complex)
    q = sigma.shape[0] // 2
    K = symplectic_form(q)
    nus = symplectic_eigenvalues(sigma)
    if np.ptp(nus) > ISOTROPY_TOL * max(1.0, nus.max()):
        raise DomainError(f"qfi_isotropic needs equal symplectic eigenvalues, got {nus}")
    nu = float(nus.mean())
    sd = np.asarray(sigma_dot, dtype=complex)
    dd = np.asarray(d_dot, dtype=complex)
    disp = 2.0 * np.vdot(dd, np.linalg.solve(sigma, dd)).real
    KS = K @ sd
    form_k = -np.trace(KS @ KS).real / (2 * (1 + nu**2))
    X = np.linalg.solve(sigma, sd)
    form_s = nu**2 * np.trace(X @ X).real / (2 * (1 + nu**2))
    if abs(form_k - form_s) > 1e-9 * max(1.0, abs(form_k)):
        raise NumericalError(
            f"isotropic QFI forms disagree ({form_k} vs {form_s}); is nu constant along the channel?")
    total = form_k + disp
    if return_forms:
        return total, {"trace_K": form_k + disp, "trace_inv": form_s + disp, "displacement": disp}
    return total


def _channel_derivatives(s: GaussianState, direction=MZ_DIRECTION):
    Gen = _generator(direction)
    return Gen @ s.sigma + s.sigma @ Gen.conj().T, Gen @ s.d


def qfi_channel(s: GaussianState, direction=MZ_DIRECTION) -> float:
    """QFI of ``s`` for the phase generated by ``n.J`` (Mach-Zehnder by default)."""
    sd, dd = _channel_derivatives(s, direction)
    return qfi_isotropic(s.sigma, s.d, sd, dd)


def qfi_matrix(s: GaussianState) -> np.ndarray:
    """3x3 matrix F with ``QFI(n) = n^T F n`` for generators ``n.J``.

    Both terms of the isotropic formula are quadratic in the generator, so the
    optimum over all PLE-rotated channels is the top eigenvalue of F.
    """
    q = s.q
    K = symplectic_form(q)
    nu = float(s.nu.mean())
    parts = [_channel_derivatives(s, e) for e in np.eye(3)]
    F = np.zeros((3, 3))
    sol = [np.linalg.solve(s.sigma, p[1]) for p in parts]
    for i in range(3):
        for j in range(i, 3):
            t = -np.trace(K @ parts[i][0] @ K @ parts[j][0]).real / (2 * (1 + nu**2))
            t += 2.0 * np.vdot(parts[i][1], sol[j]).real
            F[i, j] = F[j, i] = t
    return F


def one_mode_state(nu: float, xi: float, gamma_abs: float, phi: float, phi_d: float) -> GaussianState:
    """Single-mode state whose phase QFI is :func:`qfi_one_mode` with the same arguments.

    ``sigma = nu R(phi) S(xi) S(xi)^dag R(phi)^dag``.  The angle ``phi - phi_d``
    is measured between the displacement and the anti-squeezed quadrature,
    so the displacement is ``gamma = -i |gamma| e^{-i phi_d}``.
    """
    R = np.diag([np.exp(-1j * phi), np.exp(1j * phi)])
    S = np.array([[np.cosh(xi), -np.sinh(xi)], [-np.sinh(xi), np.cosh(xi)]], dtype=complex)
    sigma = nu * R @ S @ S.conj().T @ R.conj().T
    g = -1j * gamma_abs * np.exp(-1j * phi_d)
    return GaussianState(1, 0.5 * (sigma + sigma.conj().T), np.array([g, np.conj(g)]))


def phase_generator(q: int, mode: int = 0) -> np.ndarray:
    """Phase-space generator of ``exp(i phi n_mode)``."""
    diag = np.zeros(2 * q, dtype=complex)
    diag[mode] = 1j
    diag[q + mode] = -1j
    return np.diag(diag)


def xp_to_complex(sigma_xp) -> np.ndarray:
    """Map a real one-mode (x, p) covariance (vacuum ``I/2``) to the complex ordering (vacuum ``I``)."""
    L = np.array([[1.0, 1j], [1.0, -1j]]) / np.sqrt(2.0)
    S = 2.0 * L @ np.asarray(sigma_xp, dtype=float) @ L.conj().T
    return 0.5 * (S + S.conj().T)


def qfi_one_mode_general(sigma, sigma_dot) -> float:
    """QFI of an undisplaced one-mode state whose purity may change along the channel.

    ``Tr[(sigma^{-1} sigma')^2] / (2(1+mu^2)) + 2 mu'^2 / (1-mu^4)`` with the
    purity ``mu = 1/nu``.  The second term is dropped for pure states, where
    it is 0/0 and tends to zero.
    """
    sigma = np.asarray(sigma, dtype=complex)
    sd = np.asarray(sigma_dot, dtype=complex)
    if sigma.shape != (2, 2):
        raise InvalidDimensionError(f"one-mode covariance expected, got {sigma.shape}")
    nu = float(np.sqrt(abs(np.linalg.det(sigma))))
    if nu < 1.0 - PHYSICALITY_TOL:
        raise DomainError(f"unphysical state: symplectic eigenvalue {nu:.6g} < 1")
    X = np.linalg.solve(sigma, sd)
    mu = 1.0 / nu
    total = np.trace(X @ X).real / (2 * (1 + mu**2))
    # d(nu)/d(theta) from d(det)/d(theta) = det * Tr[sigma^{-1} sigma']
    nu_dot = 0.5 * nu * np.trace(X).real
    if nu - 1.0 > 1e-12:
        mu_dot = -nu_dot / nu**2
        total += 2 * mu_dot**2 / (1 - mu**4)
    return float(total)


def qfi_one_mode(nu: float, xi: float, gamma_abs: float, phi: float, phi_d: float) -> float:
    """Exact single-mode phase QFI of a displaced squeezed thermal state."""
    rel = phi - phi_d
    return (4 * nu**2 * np.sinh(2 * xi) ** 2 / (nu**2 + 1)
            + 4 * gamma_abs**2 / nu * (np.exp(2 * xi) * np.cos(rel) ** 2
                                       + np.exp(-2 * xi) * np.sin(rel) ** 2))


def advantage_one_mode(nu: float, xi: float, gamma_abs: float, phi: float, phi_d: float) -> float:
    """Signed ``I_opt - I_ref`` for one mode (the reference matches <N> and nu)."""
    rel = phi - phi_d
    squeeze = 4 * (nu**2 / (nu**2 + 1) * np.sinh(2 * xi) ** 2 - np.sinh(xi) ** 2)
    mixed = 4 * gamma_abs**2 / nu * (np.exp(2 * xi) * np.cos(rel) ** 2
                                     + np.exp(-2 * xi) * np.sin(rel) ** 2 - 1)
    return float(squeeze + mixed)


def defpara(p: WilliamsonParams):
    """Auxiliary angles ``(o, p, chi+, chi-, ups+, ups-)`` of the two-mode QFI."""
    o = np.sin(p.phi1 - p.phi2)
    pp = np.cos(p.phi1 - p.phi2)
    chi_p = np.sin(p.l) * np.cos(p.phi1 - p.phi_d2 + p.Psi)
    chi_m = np.sin(p.l) * np.sin(p.phi1 - p.phi_d2 + p.Psi)
    ups_p = np.cos(p.l) * np.cos(p.phi2 - p.phi_d1 - p.Psi)
    ups_m = np.cos(p.l) * np.sin(p.phi2 - p.phi_d1 - p.Psi)
    return o, pp, chi_p, chi_m, ups_p, ups_m


def qfi_two_mode_explicit(p: WilliamsonParams) -> float:
    """Closed-form Mach-Zehnder QFI for a reduced state with ``theta = Psi = 0``."""
    if abs(np.sin(p.theta)) > 1e-12 or abs(np.sin(p.Psi)) > 1e-12:
        raise DomainError("closed form needs theta = Psi = 0; reduce the state with a PLE first")
    o, pp, cp, cm, up, um = defpara(p)
    norm = cp**2 + cm**2 + up**2 + um**2
    if abs(norm - 1.0) > 1e-10:
        raise NumericalError(f"parameterization identity violated: {norm}")
    nu, x1, x2 = p.nu, p.xi1, p.xi2
    squeeze = 8 * nu**2 / (nu**2 + 1) * (pp**2 * np.sinh(x1 - x2) ** 2 + o**2 * np.sinh(x1 + x2) ** 2)
    disp = 4 * p.gamma_abs**2 / nu * (np.exp(2 * x1) * cp**2 + np.exp(-2 * x1) * cm**2
                                      + np.exp(2 * x2) * up**2 + np.exp(-2 * x2) * um**2)
    return float(squeeze + disp)


def ftql(n_mean: float, nu: float, q: int = 2) -> float:
    """Finite-temperature quantum limit ``4<N>/nu + 2q(1-nu)/nu``."""
    if n_mean < 0 or nu < 1.0 - PHYSICALITY_TOL:
        raise DomainError("ftql needs <N> >= 0 and nu >= 1")
    return 4 * n_mean / nu + 2 * q * (1 - nu) / nu


# --------------------------------------------------------------------------
# Metrological advantage
# --------------------------------------------------------------------------

@dataclass
class AdvantageReport:
    qfi_opt: float
    qfi_ref: float
    advantage: float
    strategy: str
    angles: dict = field(default_factory=dict)
    constructive_qfi: float = float("nan")
    grid_qfi: float = float("nan")
    details: dict = field(default_factory=dict)


def _xy_terms(nu, xi1, xi2):
    pref = 4 * nu**2 / (nu**2 + 1)
    base = 2 * (np.sinh(xi1) ** 2 + np.sinh(xi2) ** 2)
    X = pref * np.sinh(xi1 + xi2) ** 2 - base
    Y = pref * np.sinh(xi1 - xi2) ** 2 - base
    return X, Y


def _v_term(p: WilliamsonParams) -> float:
    _, _, cp, cm, up, um = defpara(p)
    return float(np.exp(2 * p.xi1) * cp**2 + np.exp(-2 * p.xi1) * cm**2
                 + np.exp(2 * p.xi2) * up**2 + np.exp(-2 * p.xi2) * um**2 - 1)


def _reduce(s: GaussianState, p0: WilliamsonParams, extra_quarter: bool):
    """Apply the PLE that brings the state to ``theta = Psi = 0``, ``phi1 - phi2 = pi/2``.

    With ``extra_quarter`` an additional ``R_z(pi/2)`` is applied, which
    shifts the relative squeezing phase to pi.
    """
    shift = np.pi / 2 if extra_quarter else np.pi / 4
    W = Ras(-p0.Psi + shift) @ B(-p0.theta) @ Ras((p0.phi2 - p0.phi1) / 2)
    reduced = s.transform(W)
    mean = 0.5 * (p0.phi1 + p0.phi2)
    g = reduced.gamma
    gamma_abs = float(np.linalg.norm(g))
    params = p0.replace(
        phi1=mean + shift, phi2=mean - shift, theta=0.0, Psi=0.0,
        gamma_abs=gamma_abs,
        l=float(np.arctan2(abs(g[1]), abs(g[0]))),
        phi_d1=float(-np.angle(g[0])) if abs(g[0]) > 0 else 0.0,
        phi_d2=float(-np.angle(g[1])) if abs(g[1]) > 0 else 0.0,
    )
    return reduced, params, W


def _grid_search(F: np.ndarray, step: float):
    """Best generator direction reachable by ``R_z(a) R_x(b)`` on an angle grid.

    A PLE applied before the channel rotates its generator.  The third Euler
    angle acts after the rotation about the generator axis and cannot change
    the QFI, so the grid runs over ``(a, b)`` only.
    """
    a = np.arange(0.0, 2 * np.pi, step)
    b = np.arange(0.0, np.pi + step / 2, step)
    A, Bg = np.meshgrid(a, b, indexing="ij")
    # rotate the Mach-Zehnder axis y: first by b about x, then by a about z
    n = np.stack([
        -np.sin(A) * np.cos(Bg),
        np.cos(A) * np.cos(Bg),
        np.sin(Bg),
    ], axis=-1)
    vals = np.einsum("...i,ij,...j->...", n, F, n)
    k = np.unravel_index(np.argmax(vals), vals.shape)
    return float(vals[k]), float(A[k]), float(Bg[k])


def metrological_advantage(s: GaussianState, grid_step: float = np.pi / 180) -> AdvantageReport:
    """Best Mach-Zehnder QFI over PLE-prepared probes minus the FTQL.

    The constructive branch follows the proof of the two-mode theorem.  A
    grid over PLE angles and an exact refinement (top eigenvalue of the QFI
    matrix) guard against edge cases of the branch choice.
    """
    p0 = williamson_decompose(s)
    nu = p0.nu
    ref = ftql(max(mean_photon_number(s), 0.0), nu, 2)

    red_i, p_i, _ = _reduce(s, p0, extra_quarter=False)
    X, _ = _xy_terms(nu, p0.xi1, p0.xi2)
    v_i = _v_term(p_i)
    if abs(v_i) < 1e-12:
        v_i = 0.0
    gamma2 = p0.gamma_abs**2
    if v_i < 0 and gamma2 >= nu * X / (2 * abs(v_i)):
        red, p_used = _reduce(s, p0, extra_quarter=True)[:2]
        branch = "TheoremBranch(V<0, extra phase)"
    else:
        red, p_used = red_i, p_i
        branch = f"TheoremBranch(V{'>' if v_i > 0 else ('<' if v_i < 0 else '=')}0)"
    constructive = qfi_channel(red)
    closed = qfi_two_mode_explicit(p_used)

    F = qfi_matrix(s)
    grid_val, a_best, b_best = _grid_search(F, grid_step)
    refined = float(np.linalg.eigvalsh(F)[-1])

    best = max(constructive, grid_val, refined)
    strategy = branch if constructive >= best - 1e-12 * max(1.0, abs(best)) else "Grid"
    adv = max(best - ref, 0.0)
    if adv <= 1e-10 * max(1.0, ref):
        adv = 0.0
    return AdvantageReport(
        qfi_opt=best, qfi_ref=ref, advantage=adv, strategy=strategy,
        angles={"a": a_best, "b": b_best, "c": 0.0},
        constructive_qfi=constructive, grid_qfi=grid_val,
        details={"V_I": v_i, "X": X, "closed_form_qfi": closed, "refined_qfi": refined},
    )


def optimal_one_mode_strategy(nu: float, xi: float, gamma_abs: float, phi1: float, phi_d: float):
    """Optimal PLE protocol for a displaced squeezed mode next to a thermal mode.

    Angles follow :class:`WilliamsonParams`: the squeezed mode has phase
    ``phi1`` and displacement ``|gamma| e^{-i phi_d}``.

    Returns ``("OneMode", qfi)`` when ``a = b = pi/4`` wins and
    ``("MachZehnder", qfi)`` when sending the state directly does.
    """
    V = np.exp(2 * xi) * np.sin(phi_d - phi1) ** 2 + np.exp(-2 * xi) * np.cos(phi_d - phi1) ** 2 - 1
    pref = 4 * nu**2 / (nu**2 + 1)
    one_mode = pref * np.sinh(2 * xi) ** 2 + 4 * gamma_abs**2 * (V + 1) / nu
    mach = 2 * pref * np.sinh(xi) ** 2 + 4 * gamma_abs**2 / nu
    threshold = pref * (np.sinh(2 * xi) ** 2 - 2 * np.sinh(xi) ** 2)
    if V >= 0 or -4 * gamma_abs**2 * V / nu < threshold:
        return "OneMode", float(one_mode)
    return "MachZehnder", float(mach)


def convex_roof_advantage(weights: Iterable[float], states: Iterable[GaussianState]) -> float:
    """Advantage of a mixture evaluated on the given Gaussian decomposition."""
    w = np.asarray(list(weights), dtype=float)
    states = list(states)
    if len(w) != len(states) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise DomainError("weights must be a probability vector matching the states")
    return float(sum(wi * metrological_advantage(si).advantage for wi, si in zip(w, states)))


# --------------------------------------------------------------------------
# Two-photon sector of a symmetric displaced thermal state
# --------------------------------------------------------------------------

def separability_check_n2(beta: complex, Theta: float) -> dict:
    """Peres-Horodecki test of the N=2 sector of a symmetric displaced thermal state.

    Returns the coefficients, the eigenvalues of the partial transpose in the
    single-particle basis, the characteristic-polynomial sums of the
    non-trivial 3x3 block, and the separability flag.
    """
    if not 0.0 <= Theta < 1.0:
        raise DomainError("Theta must lie in [0, 1)")
    b2 = abs(beta) ** 2
    u = 1.0 - Theta
    phi = 0.5 * (b2**2 * u**4 + 4 * b2 * Theta * u**2 + 2 * Theta**2)
    ups = b2 / np.sqrt(2) * u**2 * (b2 * u**2 + 2 * Theta)
    xi = b2**2 * u**4 / 2
    aleph = (b2 * u**2 + Theta) ** 2
    r = ups / np.sqrt(2)
    rho = np.array([
        [phi, r, r, xi],
        [r, aleph / 2, aleph / 2, r],
        [r, aleph / 2, aleph / 2, r],
        [xi, r, r, phi],
    ])
    pt = rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    pt_eigs = np.linalg.eigvalsh(pt)
    block = np.array([
        [phi, ups, aleph / 2],
        [ups, aleph / 2 + xi, ups],
        [aleph / 2, ups, phi],
    ])
    y = np.linalg.eigvalsh(block)
    sums = {
        "e1": float(y.sum()),
        "e2": float(y[0] * y[1] + y[1] * y[2] + y[0] * y[2]),
        "e3": float(np.prod(y)),
    }
    closed = {
        "e1": 2 * phi + xi + aleph / 2,
        "e2": phi**2 - aleph**2 / 4 + 2 * (xi + aleph / 2) * phi - 2 * ups**2,
        "e3": (phi - aleph / 2) * ((xi + aleph / 2) * (phi + aleph / 2) - 2 * ups**2),
    }
    scale = max(1.0, float(np.max(np.abs(pt_eigs))))
    return {
        "Phi": phi, "Upsilon": ups, "Xi": xi, "Aleph": aleph,
        "pt_eigenvalues": pt_eigs,
        "block_eigenvalues": np.concatenate([y, [aleph / 2 - xi]]),
        "char_sums": sums, "char_closed": closed,
        "separable": bool(np.all(pt_eigs >= -1e-10 * scale)),
    }


# --------------------------------------------------------------------------
# JSON helpers
# --------------------------------------------------------------------------

def _complex_list(obj, path):
    try:
        return np.array([complex(float(x[0]), float(x[1])) for x in obj])
    except (TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"expected a list of [re, im] pairs: {exc}", path) from exc


def state_from_json(obj: dict, path: str = "state") -> GaussianState:
    """Parse ``{"q", "sigma", "d"}`` or ``{"williamson": {...}}`` (exactly one form)."""
    if not isinstance(obj, dict):
        raise SchemaError("state must be an object", path)
    has_sigma = "sigma" in obj
    has_w = "williamson" in obj
    if has_sigma == has_w:
        raise SchemaError("exactly one of 'sigma' or 'williamson' is required", path)
    if has_w:
        w = obj["williamson"]
        if not isinstance(w, dict):
            raise SchemaError("must be an object", f"{path}.williamson")
        known = set(WilliamsonParams.__dataclass_fields__)
        for key in w:
            if key not in known:
                raise SchemaError(f"unknown Williamson parameter {key!r}", f"{path}.williamson.{key}")
        try:
            return williamson_build(WilliamsonParams(**{k: float(v) for k, v in w.items()}))
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc), f"{path}.williamson") from exc
    q = obj.get("q")
    if not isinstance(q, int) or q < 1:
        raise SchemaError("q must be a positive integer", f"{path}.q")
    rows = obj["sigma"]
    if not isinstance(rows, list) or len(rows) != 2 * q:
        raise SchemaError(f"sigma must have {2 * q} rows", f"{path}.sigma")
    sigma = np.array([_complex_list(r, f"{path}.sigma[{i}]") for i, r in enumerate(rows)])
    if "d" not in obj:
        raise SchemaError("missing displacement", f"{path}.d")
    d = _complex_list(obj["d"], f"{path}.d")
    return GaussianState(q, sigma, d)


def state_to_json(s: GaussianState) -> dict:
    return {
        "q": s.q,
        "sigma": [[[float(z.real), float(z.imag)] for z in row] for row in s.sigma],
        "d": [[float(z.real), float(z.imag)] for z in s.d],
    }


def random_params(rng: np.random.Generator, nu_max: float = 3.0, xi_max: float = 1.0,
                  gamma_max: float = 2.0) -> WilliamsonParams:
    """Draw a random isotropic parameter set (used by property tests and the CLI demo)."""
    u = rng.random(10)
    return WilliamsonParams(
        nu=1.0 + (nu_max - 1.0) * u[0],
        phi1=2 * np.pi * u[1], phi2=2 * np.pi * u[2],
        theta=np.pi * u[3], Psi=np.pi * u[4],
        xi1=xi_max * u[5], xi2=xi_max * u[6],
        gamma_abs=gamma_max * u[7], l=np.pi / 2 * u[8],
        phi_d1=2 * np.pi * u[9], phi_d2=2 * np.pi * rng.random(),
    )
