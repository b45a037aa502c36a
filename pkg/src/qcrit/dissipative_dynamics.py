"""Open-system light-matter models at the mean-field and Gaussian level.

Three pieces live here.

* The dissipative Rabi model with photon loss only, reduced to the closed
  first-moment system for ``<a>``, ``<sigma^+>`` and ``<sigma^z>``.
* The dissipative Rabi model with qubit decay, reduced to a linear equation
  for the (x, p) covariance of the field in the lower spin manifold,
  ``d sigma/dt = E sigma + sigma E^T - 2 kappa (sigma - sigma_L)``.
* The dissipative two-photon Dicke model, reduced by a first-order cumulant
  expansion to six real observables ``(X, Y, n, Jx, Jy, Jz)`` with
  ``X = a^2 + a^dag^2`` and ``Y = i(a^dag^2 - a^2)``.

Rates follow the Lindblad convention ``D[A] rho = A rho A^dag - {A^dag A, rho}/2``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize

from .effective_models import FitResult, critical_exponent_fit
from .errors import ConvergenceError, DomainError, NumericalError
from .gaussian_metrology import qfi_one_mode_general, xp_to_complex

__all__ = [
    "DissipationRates",
    "CovarianceParams",
    "CovarianceODEState",
    "MeanFieldVector",
    "PhaseLabel",
    "RabiSteadyStates",
    "StabilityResult",
    "TwoPhotonParams",
    "SteadyStateSet",
    "rabi_threshold",
    "rabi_first_moment_rhs",
    "rabi_dissipative_mean_field",
    "covariance_ode_rhs",
    "covariance_lyapunov",
    "covariance_steady_state",
    "covariance_closed_form",
    "eigenmatrices",
    "integrate_covariance",
    "relaxation_rate",
    "dissipative_qfi",
    "dissipative_tau",
    "dissipative_qfi_scaling",
    "scalingdiss_prefactor",
    "two_photon_mf_rhs",
    "two_photon_threshold",
    "two_photon_steady_states",
    "matrix_normal",
    "matrix_superradiant",
    "fd_jacobian",
    "stability",
    "classify_phase",
    "phase_diagram",
    "PHASE_COLUMNS",
    "phase_diagram_csv",
    "rk4",
    "implicit_trapezoid",
    "integrate",
    "STABILITY_MARGIN",
]

STABILITY_MARGIN = 1e-9
FD_STEP = 1e-7
STIFF_RATIO = 20.0


@dataclass(frozen=True)
class DissipationRates:
    kappa: float = 0.0
    gamma_down: float = 0.0
    gamma_phi: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "gamma_down", "gamma_phi"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v}")

    @property
    def gamma_prime(self) -> float:
        return 2.0 * self.gamma_phi + 0.5 * self.gamma_down


# --------------------------------------------------------------------------
# Generic integrators
# --------------------------------------------------------------------------

def rk4(f: Callable, y0, t_end: float, dt: float, t0: float = 0.0):
    """Fixed-step classical Runge-Kutta; the last step is shortened to land on ``t_end``."""
    y = np.array(y0, dtype=float)
    t = t0
    n = max(1, int(np.ceil((t_end - t0) / dt - 1e-12)))
    h = (t_end - t0) / n
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def implicit_trapezoid(f: Callable, y0, t_end: float, dt: float, t0: float = 0.0,
                       tol: float = 1e-12, max_newton: int = 30):
    """Trapezoidal rule with Newton iterations on a finite-difference Jacobian.

    A step whose Newton solve fails is retried with half the step size.
    """
    y = np.array(y0, dtype=float)
    t = t0
    h = dt
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        h = min(h, t_end - t)
        fy = f(t, y)
        z = y + h * fy
        ok = False
        for _ in range(max_newton):
            G = z - y - h / 2 * (fy + f(t + h, z))
            J = np.eye(len(y)) - h / 2 * fd_jacobian(lambda v: f(t + h, v), z)
            dz = np.linalg.solve(J, -G)
            z = z + dz
            if np.max(np.abs(dz)) <= tol * max(1.0, np.max(np.abs(z))):
                ok = True
                break
        if not ok:
            h /= 2
            if h < 1e-12 * max(1.0, t_end):
                raise ConvergenceError("implicit trapezoid: step size underflow")
            continue
        y, t = z, t + h
        h = min(2 * h, dt)
    return y


def integrate(f: Callable, y0, t_end: float, dt: float, stiffness: float = 0.0):
    """Explicit RK4 unless ``stiffness`` (a rate ratio such as kappa/omega) exceeds 20."""
    if stiffness > STIFF_RATIO:
        return implicit_trapezoid(f, y0, t_end, dt)
    return rk4(f, y0, t_end, dt)


def fd_jacobian(f: Callable, y, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian with absolute step ``step * max(1, |y_j|)``."""
    y = np.asarray(y, dtype=float)
    cols = []
    for j in range(len(y)):
        h = step * max(1.0, abs(y[j]))
        e = np.zeros_like(y)
        e[j] = h
        cols.append((np.asarray(f(y + e)) - np.asarray(f(y - e))) / (2 * h))
    return np.column_stack(cols)


# --------------------------------------------------------------------------
# Dissipative Rabi model: photon loss only
# --------------------------------------------------------------------------

def rabi_threshold(omega: float, Omega: float, kappa: float) -> float:
    """``g_t^D = sqrt(omega Omega / 4) sqrt(1 + kappa^2/omega^2)``."""
    return float(np.sqrt(omega * Omega / 4) * np.sqrt(1 + kappa**2 / omega**2))


def rabi_first_moment_rhs(y, omega: float, Omega: float, g: float, kappa: float) -> np.ndarray:
    """Closed first-moment equations in real form ``y = (Re a, Im a, Re s+, Im s+, sz)``."""
    a = y[0] + 1j * y[1]
    sp = y[2] + 1j * y[3]
    sz = y[4]
    sm = np.conj(sp)
    x = a + np.conj(a)
    da = (-1j * omega - kappa) * a - 1j * g * (sp + sm)
    dsp = 1j * Omega * sp - 1j * g * x * sz
    dsz = -2j * g * x * (sp - sm)
    return np.array([da.real, da.imag, dsp.real, dsp.imag, dsz.real])


def _spin_reduced_eigs(J: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Spectrum of J on the invariant subspace orthogonal to the conserved spin length.

    ``4|s+|^2 + sz^2`` is conserved, so its gradient ``l`` is a left null
    vector of J and the range of J lies in ``ker l``.  Restricting to that
    hyperplane removes the trivial zero mode.
    """
    ell = np.array([0.0, 0.0, 8 * y[2], 8 * y[3], 2 * y[4]])
    if np.linalg.norm(ell) == 0:
        return np.linalg.eigvals(J)
    T = linalg.null_space(ell[None, :])
    return np.linalg.eigvals(T.T @ J @ T)


@dataclass
class StabilityResult:
    eigenvalues: np.ndarray
    stable: bool
    marginal: bool

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigenvalues.real))


def _verdict(eigs: np.ndarray, margin: float = STABILITY_MARGIN) -> StabilityResult:
    m = float(np.max(eigs.real))
    return StabilityResult(np.asarray(eigs), m < -margin, abs(m) <= margin)


@dataclass
class RabiSteadyStates:
    threshold: float
    alpha: complex
    s_plus: float
    points: list
    stability: list

    @property
    def normal_stable(self) -> bool:
        return self.stability[0].stable


def rabi_dissipative_mean_field(omega: float, Omega: float, g: float, kappa: float) -> RabiSteadyStates:
    """Fixed points ``<a> in {0, +-alpha_g^D}`` and their linear stability.

    The superradiant pair exists for ``g > g_t^D``.  Stability comes from the
    finite-difference Jacobian of :func:`rabi_first_moment_rhs` with the spin
    length mode projected out.
    """
    if kappa < 0:
        raise DomainError("kappa must be >= 0")
    gt = rabi_threshold(omega, Omega, kappa)
    eta = Omega / omega
    f = lambda v: rabi_first_moment_rhs(v, omega, Omega, g, kappa)
    points = [np.array([0.0, 0.0, 0.0, 0.0, -1.0])]
    alpha, s_plus = 0j, 0.0
    if g > gt:
        root = np.sqrt(1 - (gt / g) ** 4)
        alpha = np.sqrt(eta) * (g / np.sqrt(Omega * omega)) / (1 - 1j * kappa / omega) * root
        s_plus = 0.5 * root
        sz = -(gt / g) ** 2
        for sign in (1, -1):
            a = sign * alpha
            points.append(np.array([a.real, a.imag, -sign * s_plus, 0.0, sz]))
    stab = [_verdict(_spin_reduced_eigs(fd_jacobian(f, p), p)) for p in points]
    return RabiSteadyStates(gt, complex(alpha), float(s_plus), points, stab)


# --------------------------------------------------------------------------
# Dissipative Rabi model: covariance of the field in the lower spin manifold
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceParams:
    omega: float
    Omega: float
    g: float
    kappa: float
    Gamma: float

    def __post_init__(self):
        if self.omega <= 0 or self.Omega <= 0:
            raise DomainError("omega and Omega must be > 0")
        if self.kappa <= 0:
            raise DomainError("the covariance steady state needs kappa > 0")
        if self.Gamma < 0 or self.g < 0:
            raise DomainError("Gamma and g must be >= 0")

    @property
    def g_p(self) -> float:
        return float(np.sqrt(self.omega * self.Omega) / 2)

    @property
    def P(self) -> float:
        return self.Omega**2 / (self.Gamma**2 + self.Omega**2)

    @property
    def g_pD(self) -> float:
        return float(self.g_p * np.sqrt((1 + self.Gamma**2 / self.Omega**2)
                                        * (1 + self.kappa**2 / self.omega**2)))

    @property
    def r(self) -> float:
        """``P g^2 / g_p^2``."""
        return self.P * self.g**2 / self.g_p**2

    @property
    def ratio(self) -> float:
        """``omega Gamma / (Omega kappa)``."""
        return self.omega * self.Gamma / (self.Omega * self.kappa)

    @property
    def assumptions_hold(self) -> bool:
        """Whether rates sit in the ``Gamma ~ Omega``, ``kappa ~ omega`` window (within a factor 10)."""
        a = self.Gamma / self.Omega if self.Gamma > 0 else 1.0
        b = self.kappa / self.omega
        return bool(0.1 <= a <= 10 and 0.1 <= b <= 10)

    def replace(self, **kw) -> "CovarianceParams":
        d = dict(omega=self.omega, Omega=self.Omega, g=self.g, kappa=self.kappa, Gamma=self.Gamma)
        d.update(kw)
        return CovarianceParams(**d)

    def drift(self) -> np.ndarray:
        return np.array([[0.0, self.omega], [self.omega * (self.r - 1), 0.0]])

    def sigma_L(self) -> np.ndarray:
        return 0.5 * np.diag([1.0, 1.0 + self.r * self.ratio])


@dataclass
class CovarianceODEState:
    sigma_xp: np.ndarray
    time: float = np.inf
    method: str = ""
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.sigma_xp, dtype=float)
        if np.max(np.abs(s - s.T)) > 1e-10 * max(1.0, np.max(np.abs(s))):
            raise NumericalError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(s)) <= 0:
            raise NumericalError("covariance is not positive definite")
        if np.linalg.det(s) < 0.25 - 1e-10:
            raise NumericalError(f"uncertainty relation violated: det = {np.linalg.det(s)}")
        self.sigma_xp = s

    @property
    def nu(self) -> float:
        return float(2 * np.sqrt(np.linalg.det(self.sigma_xp)))


def covariance_ode_rhs(sigma, params: CovarianceParams) -> np.ndarray:
    E = params.drift()
    sigma = np.asarray(sigma, dtype=float)
    return E @ sigma + sigma @ E.T - 2 * params.kappa * (sigma - params.sigma_L())


def covariance_lyapunov(params: CovarianceParams) -> np.ndarray:
    """Stationary point of the linear ODE, solved directly as a Lyapunov equation."""
    A = params.drift() - params.kappa * np.eye(2)
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise ConvergenceError("drift has a non-decaying mode; no steady state")
    S = linalg.solve_continuous_lyapunov(A, -2 * params.kappa * params.sigma_L())
    return 0.5 * (S + S.T)


def eigenmatrices(params: CovarianceParams):
    """Eigenmatrices ``M_0, M_1, M_+, M_-`` of ``M -> E M + M E^T`` on the real-mu branch."""
    q = params.r - 1
    if q <= 0:
        raise DomainError("real eigenvalue branch needs P g^2/g_p^2 > 1")
    s = np.sqrt(q)
    M = {
        "0": np.array([[0.0, 1.0], [-1.0, 0.0]]),
        "1": np.array([[1 / s, 0.0], [0.0, -s]]),
        "+": np.array([[1 / s, 1.0], [1.0, s]]),
        "-": np.array([[1 / s, -1.0], [-1.0, s]]),
    }
    mu = {"0": 0.0, "1": 0.0, "+": 2 * params.omega * s, "-": -2 * params.omega * s}
    return M, mu


def _expand(sigma: np.ndarray, M: dict) -> dict:
    keys = list(M)
    A = np.column_stack([M[k].ravel() for k in keys])
    coef = np.linalg.solve(A, np.asarray(sigma, dtype=float).ravel())
    return dict(zip(keys, coef))


def covariance_closed_form(params: CovarianceParams) -> np.ndarray:
    """Steady covariance written as ``1/2 diag(1, 1 - r(1-R)/2) + c [[1, k], [k, k^2]]``.

    Here ``r = P g^2/g_p^2``, ``R = omega Gamma/(Omega kappa)``, ``k = kappa/omega``
    and ``c = g^2 (1+R) / (4 (g_pD^2 - g^2))``.
    """
    p = params
    k = p.kappa / p.omega
    c = p.g**2 * (1 + p.ratio) / (4 * (p.g_pD**2 - p.g**2))
    base = 0.5 * np.diag([1.0, 1.0 - p.r / 2 * (1 - p.ratio)])
    return base + c * np.array([[1.0, k], [k, k * k]])


def covariance_steady_state(params: CovarianceParams) -> CovarianceODEState:
    """Steady state from the eigenmatrix expansion ``m_i = m_i^L 2 kappa / mu~_i``.

    On the oscillating branch (``P g^2/g_p^2 <= 1``) the expansion is not
    real, and the stationary point of the linear ODE is solved directly.
    """
    p = params
    if p.g >= p.g_pD:
        raise ConvergenceError(f"g = {p.g} >= g_pD = {p.g_pD}: the slowest mode diverges (mu~+ <= 0)")
    flags = {"assumptions_hold": p.assumptions_hold}
    if p.r - 1 <= 1e-12:
        return CovarianceODEState(covariance_lyapunov(p), method="lyapunov", flags=flags)
    M, mu = eigenmatrices(p)
    mL = _expand(p.sigma_L(), M)
    sigma = np.zeros((2, 2))
    for key in M:
        mu_t = 2 * p.kappa - mu[key]
        sigma += mL[key] * 2 * p.kappa / mu_t * M[key]
    return CovarianceODEState(sigma, method="eigenmatrix", flags=flags)


def integrate_covariance(params: CovarianceParams, t_end: float, sigma0=None, dt: float | None = None,
                         t_samples: Sequence[float] | None = None):
    """Forward integration of the covariance ODE from ``sigma0`` (vacuum by default).

    Returns the final covariance, or the covariance at each time of
    ``t_samples`` when given.
    """
    s0 = 0.5 * np.eye(2) if sigma0 is None else np.asarray(sigma0, dtype=float)
    rate = max(params.omega, params.kappa, abs(params.omega * (params.r - 1)))
    dt = dt if dt is not None else 0.02 / rate
    f = lambda t, y: covariance_ode_rhs(y.reshape(2, 2), params).ravel()
    stiff = params.kappa / params.omega
    if t_samples is None:
        return integrate(f, s0.ravel(), t_end, dt, stiff).reshape(2, 2)
    out, y, t = [], s0.ravel(), 0.0
    for ts in t_samples:
        if ts > t:
            y = integrate(lambda tt, v: f(tt, v), y, ts - t, dt, stiff)
            t = ts
        out.append(y.reshape(2, 2).copy())
    return np.array(out)


def relaxation_rate(params: CovarianceParams, n_samples: int = 40) -> dict:
    """Slowest decay rate of ``sigma(t) - sigma_ss``, measured and predicted.

    The measured value is the log-linear slope of ``|sigma(t) - sigma_ss|``
    over a late window where the slowest mode dominates.
    """
    p = params
    ss = covariance_lyapunov(p)
    A = p.drift() - p.kappa * np.eye(2)
    lyap = np.linalg.eigvals(np.kron(A, np.eye(2)) + np.kron(np.eye(2), A))
    slowest = float(-np.max(lyap.real))
    gap = float(-np.max(lyap.real[lyap.real < -slowest * (1 + 1e-9)])) if np.any(
        lyap.real < -slowest * (1 + 1e-9)) else 2 * slowest
    t0 = 10.0 / gap
    t1 = t0 + 6.0 / slowest
    ts = np.linspace(t0, t1, n_samples)
    sig = integrate_covariance(p, t1, t_samples=ts)
    dev = np.array([np.linalg.norm(s - ss) for s in sig])
    slope = np.polyfit(ts, np.log(dev), 1)[0]
    q = p.r - 1
    mu_plus = 2 * p.kappa - 2 * p.omega * np.sqrt(q) if q > 0 else np.nan
    near = 2 * p.kappa * (p.g_pD - p.g) / p.g_pD * (1 + p.omega**2 / p.kappa**2)
    return {"measured": float(-slope), "mu_tilde_plus": float(mu_plus),
            "spectral": slowest, "near_threshold": float(near)}


def dissipative_qfi(params: CovarianceParams, h: float | None = None) -> float:
    """QFI for Omega of the steady covariance, with ``sigma'`` from a central difference in Omega."""
    h = h if h is not None else 1e-5 * params.Omega
    sig = covariance_steady_state(params).sigma_xp
    sp = covariance_steady_state(params.replace(Omega=params.Omega + h)).sigma_xp
    sm = covariance_steady_state(params.replace(Omega=params.Omega - h)).sigma_xp
    return qfi_one_mode_general(xp_to_complex(sig), xp_to_complex((sp - sm) / (2 * h)))


def dissipative_tau(params: CovarianceParams) -> float:
    """``tau = (1/(2 kappa)) (g_pD / (g_pD - g)) kappa^2/(kappa^2 + omega^2)``."""
    p = params
    return float(1 / (2 * p.kappa) * p.g_pD / (p.g_pD - p.g) * p.kappa**2 / (p.kappa**2 + p.omega**2))


def scalingdiss_prefactor(params: CovarianceParams) -> float:
    """``((G^2-O^2)/(G^2+O^2))^2 (kappa^2/(2 Omega^2)) (1 + omega^2/kappa^2)^2``."""
    p = params
    return float(((p.Gamma**2 - p.Omega**2) / (p.Gamma**2 + p.Omega**2)) ** 2
                 * p.kappa**2 / (2 * p.Omega**2) * (1 + p.omega**2 / p.kappa**2) ** 2)


def dissipative_qfi_scaling(params: CovarianceParams, g_fracs: Sequence[float]) -> dict:
    """QFI against protocol duration over ``g = g_frac * g_pD``; log-log slope expected 2."""
    taus, qfis = [], []
    for f in g_fracs:
        if not 0 < f < 1:
            raise DomainError("g grid must lie strictly below g_pD")
        p = params.replace(g=f * params.g_pD)
        taus.append(dissipative_tau(p))
        qfis.append(dissipative_qfi(p))
    taus, qfis = np.array(taus), np.array(qfis)
    fit = critical_exponent_fit(list(zip(taus, qfis)), expected=2.0, min_points=3, min_decades=0.5)
    return {"tau": taus, "qfi": qfis, "fit": fit, "slope": fit.slope,
            "ratio_last": float(qfis[-1] / taus[-1] ** 2),
            "prefactor_quoted": scalingdiss_prefactor(params)}


# --------------------------------------------------------------------------
# Dissipative two-photon Dicke model, cumulant mean field
# --------------------------------------------------------------------------

FIELDS = ("X", "Y", "n_phot", "Jx", "Jy", "Jz")


@dataclass
class MeanFieldVector:
    X: float
    Y: float
    n_phot: float
    Jx: float
    Jy: float
    Jz: float

    @classmethod
    def from_array(cls, v) -> "MeanFieldVector":
        return cls(*[float(x) for x in v])

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.n_phot, self.Jx, self.Jy, self.Jz])

    def is_physical(self, N: int, tol: float = 1e-9) -> bool:
        j = N / 2
        return bool(self.n_phot >= -tol and max(abs(self.Jx), abs(self.Jy), abs(self.Jz)) <= j + tol
                    and self.Jx**2 + self.Jy**2 + self.Jz**2 <= j * (j + 1) + tol)


class PhaseLabel:
    NORMAL = "Normal"
    SUPERRADIANT = "Superradiant"
    BISTABLE = "Bistable"
    INSTABILITY = "Instability"
    ALL = (NORMAL, SUPERRADIANT, BISTABLE, INSTABILITY)
    SHORT = {NORMAL: "N", SUPERRADIANT: "S", BISTABLE: "B", INSTABILITY: "I"}

    @staticmethod
    def from_verdicts(normal_stable: bool, sr_stable: bool) -> str:
        if normal_stable and sr_stable:
            return PhaseLabel.BISTABLE
        if normal_stable:
            return PhaseLabel.NORMAL
        if sr_stable:
            return PhaseLabel.SUPERRADIANT
        return PhaseLabel.INSTABILITY


@dataclass(frozen=True)
class TwoPhotonParams:
    omega: float
    Omega: float
    g: float
    N: int

    def __post_init__(self):
        if self.omega <= 0 or self.Omega <= 0 or self.g < 0 or self.N < 1:
            raise DomainError("need omega, Omega > 0, g >= 0 and N >= 1")


def two_photon_mf_rhs(v, p: TwoPhotonParams, rates: DissipationRates) -> np.ndarray:
    """Time derivatives of ``(X, Y, n, Jx, Jy, Jz)`` in the factorized closure."""
    X, Y, n, Jx, Jy, Jz = (v.as_array() if isinstance(v, MeanFieldVector) else np.asarray(v, dtype=float))
    w, W, g, N = p.omega, p.Omega, p.g, p.N
    k, gd, gp = rates.kappa, rates.gamma_down, rates.gamma_prime
    c = g / np.sqrt(N)
    return np.array([
        -k * X + 2 * w * Y,
        -k * Y - 2 * w * X - 8 * c * Jx - 16 * c * Jx * n,
        -4 * c * Jx * Y - k * n,
        -2 * W * Jy - gp * Jx,
        2 * W * Jx - gp * Jy - 2 * c * Jz * X,
        2 * c * Jy * X - gd * Jz - gd * N / 2,
    ])


def two_photon_threshold(omega: float, Omega: float, rates: DissipationRates) -> float:
    """``g_p^D = sqrt((1/8)(2 omega + kappa^2/(2 omega))(2 Omega + Gamma'^2/(2 Omega)))``."""
    k, gp = rates.kappa, rates.gamma_prime
    return float(np.sqrt((2 * omega + k**2 / (2 * omega)) * (2 * Omega + gp**2 / (2 * Omega)) / 8))


def normal_point(N: int) -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, 0.0, 0.0, -N / 2])


@dataclass
class SteadyStateSet:
    normal: np.ndarray
    superradiant: list
    g_pD: float
    residuals: list
    flags: dict = field(default_factory=dict)


def _superradiant_closed_form(p: TwoPhotonParams, rates: DissipationRates, gpD: float):
    w, W, g, N = p.omega, p.Omega, p.g, p.N
    k, gd, gp = rates.kappa, rates.gamma_down, rates.gamma_prime
    if gd > 0:
        Z = w * gp / (2 * W * N * gd)
        b = (1 + Z) / 2
        disc = b * b - Z * (gpD / g) ** 2
        if disc < 0:
            return None, None
        # b - sqrt(disc) suffers cancellation when Z (gpD/g)^2 << b^2
        Jz = (N / 2) * (-Z * (gpD / g) ** 2 / (b + np.sqrt(disc)))
    else:
        Jz = -(N / 2) * (gpD / g) ** 2
    first = N / 4 * (k**2 + 4 * w**2) / (16 * g**2)
    Jx2 = first + w * W / (4 * W**2 + gp**2) * Jz
    if abs(Jx2) <= 1e-12 * first:
        # the two terms cancel identically when gamma_down = 0
        Jx2 = 0.0
    if Jx2 < 0:
        return None, None
    out = []
    for sign in (1, -1):
        Jx = sign * np.sqrt(Jx2)
        X = 4 * g * w * np.sqrt(N) * Jx / (-N / 4 * (k**2 + 4 * w**2) + 16 * g**2 * Jx**2)
        Y = k / (2 * w) * X
        n = -4 * g / (k * np.sqrt(N)) * Jx * Y if k > 0 else np.nan
        Jy = -gp / (2 * W) * Jx
        out.append(np.array([X, Y, n, Jx, Jy, Jz]))
    return out, Jx2


def two_photon_steady_states(p: TwoPhotonParams, rates: DissipationRates,
                             residual_tol: float = 1e-8) -> SteadyStateSet:
    """Normal point plus the superradiant pair when it is real.

    The pair is real when the ``Jz`` discriminant and ``Jx^2`` are both
    non-negative.  This holds for every ``g >= g_p^D`` and also on a window
    below it, ``g >= g_p^D 2 sqrt(Z)/(1+Z)``, which is where bistability lives.

    Every returned point is checked against the right-hand side; a residual
    above ``residual_tol * N`` raises :class:`NumericalError`.
    """
    gpD = two_photon_threshold(p.omega, p.Omega, rates)
    normal = normal_point(p.N)
    flags = {}
    sr = []
    if rates.kappa == 0:
        flags["kappa_zero"] = True
    elif p.g > 0:
        pts, Jx2 = _superradiant_closed_form(p, rates, gpD)
        if pts is None:
            flags["complex_Jx"] = True
        elif rates.gamma_down == 0:
            # Z -> infinity collapses the pair onto Jx = 0, a point of the
            # Jz continuum that exists without qubit decay
            flags["gamma_down_zero_degenerate"] = True
            sr = [pts[0]]
        else:
            sr = pts
            flags["below_threshold"] = bool(p.g < gpD)
    else:
        flags["complex_Jx"] = True
    residuals = []
    for v in [normal] + sr:
        r = float(np.linalg.norm(two_photon_mf_rhs(v, p, rates)))
        if r > residual_tol * p.N:
            raise NumericalError(f"steady state residual {r:.3g} exceeds {residual_tol * p.N:.3g}")
        residuals.append(r)
    return SteadyStateSet(normal, sr, gpD, residuals, flags)


def matrix_normal(p: TwoPhotonParams, rates: DissipationRates) -> np.ndarray:
    """Linearization ``M_N`` about the normal point, entry by entry."""
    w, W, g, N = p.omega, p.Omega, p.g, p.N
    k, gd, gp = rates.kappa, rates.gamma_down, rates.gamma_prime
    return np.array([
        [-k, 2 * w, 0, 0, 0, 0],
        [-2 * w, -k, 0, -8 * g / np.sqrt(N), 0, 0],
        [0, 0, -k, 0, 0, 0],
        [0, 0, 0, -gp, -2 * W, 0],
        [g * np.sqrt(N), 0, 0, 2 * W, -gp, 0],
        [0, 0, 0, 0, 0, -gd],
    ], dtype=float)


def matrix_superradiant(v, p: TwoPhotonParams, rates: DissipationRates) -> np.ndarray:
    """Linearization ``M_S`` with the steady-state values of ``v`` substituted."""
    X, Y, n, Jx, Jy, Jz = np.asarray(v, dtype=float)
    w, W, g, N = p.omega, p.Omega, p.g, p.N
    k, gd, gp = rates.kappa, rates.gamma_down, rates.gamma_prime
    c = g / np.sqrt(N)
    return np.array([
        [-k, 2 * w, 0, 0, 0, 0],
        [-2 * w, -k, -16 * c * Jx, -8 * c * (1 + 2 * n), 0, 0],
        [0, -4 * c * Jx, -k, -4 * c * Y, 0, 0],
        [0, 0, 0, -gp, -2 * W, 0],
        [-2 * c * Jz, 0, 0, 2 * W, -gp, -2 * c * X],
        [2 * c * Jy, 0, 0, 0, 2 * c * X, -gd],
    ], dtype=float)


def stability(solution, p: TwoPhotonParams, rates: DissipationRates, kind: str | None = None,
              margin: float = STABILITY_MARGIN) -> StabilityResult:
    """Eigenvalues of ``M_N`` (normal point) or ``M_S`` (superradiant point)."""
    v = np.asarray(solution, dtype=float)
    if kind is None:
        kind = "normal" if np.allclose(v, normal_point(p.N), atol=1e-12 * p.N) else "superradiant"
    M = matrix_normal(p, rates) if kind == "normal" else matrix_superradiant(v, p, rates)
    return _verdict(np.linalg.eigvals(M), margin)


@dataclass
class PhasePoint:
    label: str
    max_re_normal: float
    max_re_superradiant: float
    marginal: bool
    flags: dict


def classify_phase(p: TwoPhotonParams, rates: DissipationRates) -> PhasePoint:
    ss = two_photon_steady_states(p, rates)
    sn = stability(ss.normal, p, rates, "normal")
    if ss.superradiant and not ss.flags.get("gamma_down_zero_degenerate"):
        ssr = stability(ss.superradiant[0], p, rates, "superradiant")
        sr_stable, sr_max, sr_marg = ssr.stable, ssr.max_real, ssr.marginal
    else:
        sr_stable, sr_max, sr_marg = False, float("nan"), False
    label = PhaseLabel.from_verdicts(sn.stable, sr_stable)
    return PhasePoint(label, sn.max_real, sr_max, sn.marginal or sr_marg, ss.flags)


PHASE_COLUMNS = ("g_over_omega", "Omega_over_omega", "kappa_over_omega", "Gamma_down", "Gamma_phi", "N",
                 "label", "max_re_eig_normal", "max_re_eig_superradiant")


def phase_diagram(g_grid: Sequence[float], Omega_grid: Sequence[float], rates: DissipationRates, N: int,
                  omega: float = 1.0, threads: int = 1) -> list:
    """Label every ``(g, Omega)`` point; rows come back in grid order (Omega outer, g inner)."""
    g_grid, Omega_grid = list(g_grid), list(Omega_grid)
    if not g_grid or not Omega_grid:
        raise DomainError("phase diagram grids must be non-empty")
    pts = [(g, W) for W in Omega_grid for g in g_grid]

    def work(gw):
        g, W = gw
        r = classify_phase(TwoPhotonParams(omega, W, g, N), rates)
        return {"g_over_omega": g / omega, "Omega_over_omega": W / omega,
                "kappa_over_omega": rates.kappa / omega, "Gamma_down": rates.gamma_down,
                "Gamma_phi": rates.gamma_phi, "N": N, "label": r.label,
                "max_re_eig_normal": r.max_re_normal, "max_re_eig_superradiant": r.max_re_superradiant,
                "marginal": r.marginal}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(work, pts))
    return [work(x) for x in pts]


def phase_diagram_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHASE_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in PHASE_COLUMNS])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)
