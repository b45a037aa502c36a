"""Critical sensing with the Rabi model near its superradiant point.

The qubit frequency Omega is estimated from the ground state reached by an
adiabatic ramp of the coupling from 0 to ``g_end < g_p``.  In the normal
phase the ground state is a squeezed vacuum with ``xi = -ln(1 - lambda^2)/4``
and ``lambda = g/g_p``, ``g_p = sqrt(omega Omega)/2``.

The ramp speed follows ``dg/dt = v0 omega g_p (1 - g^2/g_p^2)^{3/2}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .effective_models import FitResult, critical_exponent_fit
from .errors import ConvergenceError, DomainError, NumericalError

__all__ = [
    "RampSchedule",
    "ProtocolReport",
    "protocol_duration",
    "squeezing",
    "dxi_dOmega",
    "qfi_closed_form",
    "qfi_closed_form_omega",
    "qfi_exact_normal",
    "snr",
    "photon_number_distribution",
    "photon_number_fi",
    "homodyne_fi",
    "adiabatic_excitation",
    "validity_tag",
    "tau4_scaling",
    "ramsey_baseline",
    "run_protocol",
    "sweep",
    "SWEEP_COLUMNS",
]


def _gp(omega: float, Omega: float) -> float:
    return 0.5 * np.sqrt(omega * Omega)


# --------------------------------------------------------------------------
# Ramp schedule
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RampSchedule:
    v0: float
    g_end: float
    g_p: float
    omega: float = 1.0

    def __post_init__(self):
        if self.v0 <= 0:
            raise DomainError("v0 must be positive")
        if not 0 < self.g_end < self.g_p:
            raise DomainError(f"need 0 < g_end < g_p, got g_end={self.g_end}, g_p={self.g_p}")

    @property
    def lam_end(self) -> float:
        return self.g_end / self.g_p

    def speed(self, g):
        """``V(g) = v0 omega g_p ((g_p^2 - g^2)/g_p^2)^{3/2}``."""
        x = 1.0 - (np.asarray(g) / self.g_p) ** 2
        return self.v0 * self.omega * self.g_p * np.clip(x, 0.0, None) ** 1.5

    def g_of_t(self, t):
        """Closed-form profile: ``lambda(t) = s/sqrt(1+s^2)`` with ``s = v0 omega t``."""
        s = self.v0 * self.omega * np.asarray(t, dtype=float)
        return self.g_p * s / np.sqrt(1.0 + s**2)

    def t_of_g(self, g):
        lam = np.asarray(g, dtype=float) / self.g_p
        return lam / (self.v0 * self.omega * np.sqrt(1.0 - lam**2))

    @property
    def tau(self) -> float:
        return float(self.t_of_g(self.g_end))

    def integrate_profile(self, n_points: int = 201, rtol: float = 1e-11):
        """Integrate ``dg/dt = V(g)`` numerically up to ``tau``; returns ``(t, g)``."""
        t_eval = np.linspace(0.0, self.tau, n_points)
        sol = integrate.solve_ivp(lambda t, y: [self.speed(y[0])], (0.0, self.tau), [0.0],
                                  t_eval=t_eval, rtol=rtol, atol=1e-14 * self.g_p, method="DOP853")
        if not sol.success:
            raise ConvergenceError(sol.message)
        return sol.t, sol.y[0]


def protocol_duration(v0: float, g_end: float, omega: float, g_p: float) -> dict:
    """Ramp duration from the quadrature of ``1/V`` and from the quoted closed form.

    The quadrature is authoritative.  The quoted form
    ``(1/(v0 omega)) (g/g_p) (g_p/(g_p - g))^{1/2}`` differs from it by the
    factor ``sqrt(1 + lambda)``.
    """
    sched = RampSchedule(v0, g_end, g_p, omega)
    quad, err = integrate.quad(lambda g: 1.0 / sched.speed(g), 0.0, g_end, epsabs=0.0,
                               epsrel=1e-12, limit=200)
    analytic = sched.tau
    lam = g_end / g_p
    closed = 1.0 / (v0 * omega) * lam * np.sqrt(1.0 / (1.0 - lam))
    return {
        "tau": quad,
        "tau_quadrature": quad,
        "tau_analytic": analytic,
        "tau_closed_form": closed,
        "closed_form_ratio": closed / quad,
        "quadrature_error": err,
    }


# --------------------------------------------------------------------------
# Quantum and classical Fisher information
# --------------------------------------------------------------------------

def squeezing(lam):
    lam = np.asarray(lam, dtype=float)
    return -0.25 * np.log1p(-lam**2)


def dxi_dOmega(g: float, Omega: float, omega: float = 1.0) -> float:
    """Derivative of the squeezing with respect to Omega at fixed g and omega."""
    lam2 = g**2 / _gp(omega, Omega) ** 2
    if lam2 >= 1:
        raise DomainError("normal phase requires g < g_p")
    return -lam2 / (4.0 * Omega * (1.0 - lam2))


def qfi_exact_normal(g: float, Omega: float, omega: float = 1.0) -> float:
    """Squeezed-vacuum QFI ``2 (d xi/d Omega)^2 = lambda^4 / (8 Omega^2 (1-lambda^2)^2)``."""
    return 2.0 * dxi_dOmega(g, Omega, omega) ** 2


def qfi_closed_form(g_end: float, Omega: float, g_p: float, phase: str = "normal") -> float:
    """Near-critical QFI for Omega.

    normal:       ``(1/(8 Omega^2)) (g_p^2/(g_p^2 - g^2))^2``
    superradiant: ``(1/(2 Omega^2)) g_p^8/(g^4 - g_p^4)^2 + g_p^6/(Omega omega g^4 sqrt(g^4 - g_p^4))``
    The normal form is the ``g -> g_p`` limit of :func:`qfi_exact_normal`.
    """
    if phase == "normal":
        if not 0 <= g_end < g_p:
            raise DomainError("normal branch requires 0 <= g_end < g_p")
        return float((g_p**2 / (g_p**2 - g_end**2)) ** 2 / (8 * Omega**2))
    if phase == "superradiant":
        if g_end <= g_p:
            raise DomainError("superradiant branch requires g_end > g_p")
        omega = 4 * g_p**2 / Omega
        d = g_end**4 - g_p**4
        return float(g_p**8 / (2 * Omega**2 * d**2) + g_p**6 / (Omega * omega * g_end**4 * np.sqrt(d)))
    raise DomainError(f"unknown phase {phase!r}")


def qfi_closed_form_omega(g_end: float, omega: float, g_p: float) -> float:
    """Near-critical QFI for the boson frequency omega."""
    if not 0 <= g_end < g_p:
        raise DomainError("normal branch requires 0 <= g_end < g_p")
    return float((g_p**2 / (g_p**2 - g_end**2)) ** 2 / (8 * omega**2))


def snr(qfi: float, param: float) -> float:
    """Signal-to-noise ratio ``Q = param * sqrt(I)``."""
    return float(param * np.sqrt(qfi))


def _log_central(m):
    # log of (2m)! / (4^m (m!)^2)
    return gammaln(2 * m + 1) - m * np.log(4.0) - 2 * gammaln(m + 1)


def photon_number_distribution(xi: float, m_max: int) -> np.ndarray:
    """``p(2m) = tanh(xi)^{2m} (2m)! / (cosh(xi) 4^m (m!)^2)`` for m < m_max."""
    m = np.arange(m_max)
    if xi == 0:
        out = np.zeros(m_max)
        out[0] = 1.0
        return out
    logp = 2 * m * np.log(np.tanh(xi)) - np.log(np.cosh(xi)) + _log_central(m)
    return np.exp(logp)


def photon_number_fi(xi: float, dxi_dOmega: float, tail_tol: float = 1e-12,
                     max_terms: int = 10_000, return_details: bool = False):
    """Fisher information of photon counting on a squeezed vacuum.

    Sums ``p (d log p)^2`` over even photon numbers until the geometric tail
    bound drops below ``tail_tol``, then checks the result against
    ``2 (d xi)^2`` to 1e-8 relative.
    """
    if xi <= 0:
        raise DomainError("photon-number series needs xi > 0")
    x = np.tanh(xi) ** 2
    block = 256
    total = 0.0
    norm = 0.0
    start = 0
    dlog_pref = 1.0 / (np.sinh(xi) * np.cosh(xi))
    while True:
        if start >= max_terms:
            raise NumericalError(f"photon-number series not converged within {max_terms} terms")
        m = np.arange(start, min(start + block, max_terms))
        logp = m * np.log(x) - np.log(np.cosh(xi)) + _log_central(m)
        p = np.exp(logp)
        score = 2 * m * dlog_pref - np.tanh(xi)
        total += float(np.sum(p * score**2))
        norm += float(p.sum())
        start = int(m[-1]) + 1
        # remaining terms are bounded by a geometric series with ratio x
        tail = p[-1] * x / (1 - x) * max(1.0, score[-1] ** 2)
        if tail < tail_tol:
            break
    fi = total * dxi_dOmega**2
    closed = 2.0 * dxi_dOmega**2
    if abs(fi - closed) > 1e-8 * closed:
        raise NumericalError(f"photon-number FI {fi} disagrees with 2 (dxi)^2 = {closed}")
    if return_details:
        return fi, {"closed_form": closed, "normalization": norm, "terms": start}
    return fi


def homodyne_fi(lam: float, eta: float, phi: float, omega: float = 1.0) -> float:
    """Classical FI of homodyne detection of ``x_phi = cos(phi) x + sin(phi) p``.

    The marginal is a zero-mean Gaussian with variance
    ``v = e^{2 xi} cos^2 phi + e^{-2 xi} sin^2 phi``, so FI = (dv)^2 / (2 v^2).
    """
    if not 0 <= lam < 1:
        raise DomainError("homodyne FI is defined in the normal phase 0 <= lambda < 1")
    Omega = eta * omega
    g = lam * _gp(omega, Omega)
    xi = float(squeezing(lam))
    dxi = dxi_dOmega(g, Omega, omega)
    c2, s2 = np.cos(phi) ** 2, np.sin(phi) ** 2
    v = np.exp(2 * xi) * c2 + np.exp(-2 * xi) * s2
    dv = 2 * dxi * (np.exp(2 * xi) * c2 - np.exp(-2 * xi) * s2)
    return float(dv**2 / (2 * v**2))


# --------------------------------------------------------------------------
# Adiabatic ramp in the instantaneous squeezed basis
# --------------------------------------------------------------------------

def _a2_minus_adag2(n: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    return a @ a - a.T @ a.T


def adiabatic_excitation(schedule: RampSchedule, eta: float = 100.0, cutoff: int = 24,
                         n_out: int = 101, rtol: float = 1e-10) -> dict:
    """Integrate the ramp in the basis of instantaneous squeezed Fock states.

    With ``|n, xi(g)> = S(xi)|n>`` and ``S(xi) = exp(xi (a^2 - a^dag^2)/2)``
    the coefficients obey ``dc/dg = -i E c / V(g) - (xi'(g)/2) (a^2 - a^dag^2) c``
    with ``E_n = n omega sqrt(1 - lambda^2)``.  The effective normal-phase
    Hamiltonian holds for eta >> 1, so eta only enters through g_p.
    """
    if eta < 50:
        raise DomainError("the squeezed-oscillator picture needs eta >= 50")
    if schedule.v0 > 0.1:
        raise DomainError("the adiabatic analysis assumes v0 <= 0.1")
    gp = schedule.g_p
    L = _a2_minus_adag2(cutoff)
    nvec = np.arange(cutoff)

    def rhs(g, y):
        c = y[:cutoff] + 1j * y[cutoff:]
        lam2 = (g / gp) ** 2
        energy = nvec * schedule.omega * np.sqrt(1 - lam2)
        dxi = g / (2 * (gp**2 - g**2))
        dc = -1j * energy / schedule.speed(g) * c - 0.5 * dxi * (L @ c)
        return np.concatenate([dc.real, dc.imag])

    y0 = np.zeros(2 * cutoff)
    y0[0] = 1.0
    g_eval = np.linspace(0.0, schedule.g_end, n_out)
    sol = integrate.solve_ivp(rhs, (0.0, schedule.g_end), y0, t_eval=g_eval, method="DOP853",
                              rtol=rtol, atol=1e-13)
    if not sol.success:
        raise ConvergenceError(sol.message)
    c = sol.y[:cutoff] + 1j * sol.y[cutoff:]
    pops = np.abs(c) ** 2
    if np.min(pops[0]) < 0.5:
        raise ConvergenceError("adiabaticity failure: ground-state population fell below 0.5")
    if np.max(pops[-2:]) > 1e-8:
        raise NumericalError("instantaneous-basis cutoff too small: top levels are populated")
    lam_t = g_eval / gp
    return {
        "g": g_eval,
        "t": schedule.t_of_g(g_eval),
        "c2_sq": pops[2],
        "ground_population": pops[0],
        "c2_final_sq": float(pops[2, -1]),
        "predicted": schedule.v0**2 / 32 * lam_t**2,
        "norm_drift": float(abs(pops[:, -1].sum() - 1.0)),
    }


# --------------------------------------------------------------------------
# Scaling laws
# --------------------------------------------------------------------------

def validity_tag(lam: float, eta: float) -> bool:
    """True when the quadratic regime ``1 - lambda > 5 eta^{-2/3}`` holds."""
    return bool(1.0 - lam > 5.0 * eta ** (-2.0 / 3.0))


def tau4_scaling(v0: float, eta: float, lam_grid: Sequence[float], omega: float = 1.0,
                 min_valid: int = 3) -> dict:
    """Log-log slope of the QFI against the quadrature ramp duration.

    Points outside the quadratic-regime window are tagged and dropped from
    the fit; fewer than ``min_valid`` survivors raise a domain error.
    """
    Omega = eta * omega
    gp = _gp(omega, Omega)
    rows = []
    for lam in lam_grid:
        g = lam * gp
        tau = protocol_duration(v0, g, omega, gp)["tau"]
        rows.append((lam, tau, qfi_exact_normal(g, Omega, omega), qfi_closed_form(g, Omega, gp),
                     validity_tag(lam, eta)))
    arr = np.array([r[:4] for r in rows])
    valid = np.array([r[4] for r in rows])
    if valid.sum() < min_valid:
        raise DomainError("the lambda grid leaves the quadratic-regime window")
    lam, tau, qfi, qfi_quoted = arr.T
    fit = critical_exponent_fit(np.column_stack([tau[valid], qfi[valid]]), expected=4.0,
                                min_points=min_valid, min_decades=0.0)
    prefactor = qfi * 8 * eta**2 / (v0**4 * omega**2 * tau**4)
    prefactor_quoted = qfi_quoted * 8 * eta**2 / (v0**4 * omega**2 * tau**4)
    return {"fit": fit, "slope": fit.slope, "lam": lam, "tau": tau, "qfi": qfi,
            "valid": valid, "prefactor": prefactor, "prefactor_quoted": prefactor_quoted}


def ramsey_baseline(taus: Sequence[float], Omega: float = 1.0) -> FitResult:
    """Static Ramsey protocol on a single qubit, ``exp(-i Omega t sigma_z/2)|+>``.

    The QFI is computed from the state overlap and fitted against tau.
    """
    out = []
    for tau in taus:
        d = 1e-5 * max(Omega, 1.0)
        psi = lambda W: np.array([np.exp(-0.5j * W * tau), np.exp(0.5j * W * tau)]) / np.sqrt(2)
        a, b = psi(Omega - d), psi(Omega + d)
        # infidelity 1 - |<a|b>|^2 = I (2d)^2 / 4 to leading order
        fid = abs(np.vdot(a, b)) ** 2
        out.append((tau, 4 * (1 - fid) / (2 * d) ** 2))
    return critical_exponent_fit(np.array(out), expected=2.0, min_points=3, min_decades=0.0)


# --------------------------------------------------------------------------
# End-to-end report
# --------------------------------------------------------------------------

@dataclass
class ProtocolReport:
    lam: float
    eta: float
    tau: float
    tau_closed_form: float
    qfi: float
    qfi_quoted: float
    snr: float
    fi_photon_number: float
    fi_homodyne: Callable[[float], float] = field(repr=False)
    c2_final_sq: float = float("nan")
    valid: bool = True


def run_protocol(lam: float, eta: float, v0: float = 0.05, omega: float = 1.0,
                 with_dynamics: bool = True, cutoff: int = 24) -> ProtocolReport:
    Omega = eta * omega
    gp = _gp(omega, Omega)
    g = lam * gp
    dur = protocol_duration(v0, g, omega, gp)
    qfi = qfi_exact_normal(g, Omega, omega)
    fi_pn = photon_number_fi(float(squeezing(lam)), dxi_dOmega(g, Omega, omega))
    c2 = float("nan")
    if with_dynamics:
        c2 = adiabatic_excitation(RampSchedule(v0, g, gp, omega), eta, cutoff)["c2_final_sq"]
    return ProtocolReport(
        lam=lam, eta=eta, tau=dur["tau"], tau_closed_form=dur["tau_closed_form"],
        qfi=qfi, qfi_quoted=qfi_closed_form(g, Omega, gp), snr=snr(qfi, Omega),
        fi_photon_number=fi_pn,
        fi_homodyne=lambda phi: homodyne_fi(lam, eta, phi, omega),
        c2_final_sq=c2, valid=validity_tag(lam, eta),
    )


SWEEP_COLUMNS = ("g_end", "lambda", "tau_quadrature", "tau_closed_form", "qfi", "snr",
                 "fi_photon", "fi_homodyne_x", "c2_sq", "regime_tag")


def sweep(lams: Sequence[float], eta: float, v0: float = 0.05, omega: float = 1.0,
          with_dynamics: bool = True) -> list[tuple]:
    """Rows for the adiabatic CSV output, one per ``lambda``."""
    gp = _gp(omega, eta * omega)
    rows = []
    for lam in lams:
        r = run_protocol(lam, eta, v0, omega, with_dynamics)
        rows.append((lam * gp, lam, r.tau, r.tau_closed_form, r.qfi, r.snr, r.fi_photon_number,
                     r.fi_homodyne(0.0), r.c2_final_sq, "quadratic" if r.valid else "outside"))
    return rows
