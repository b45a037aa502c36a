"""Closed-form approximate spectra, potentials and mean-field solutions.

Each routine documents the regime where it is meant to hold; the unit tests
compare them against exact diagonalization from :mod:`qcrit.fock_core`.
Unless stated otherwise energies are absolute eigenvalues of the
Hamiltonians built by ``fock_core.build_hamiltonian`` and the field
quadrature is x = a + a'.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError


@dataclass(frozen=True)
class EffectiveSpectrum:
    levels: tuple  # ((label, energy), ...) ascending in energy
    validity_note: str = ""
    squeezing: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        lv = tuple(sorted(self.levels, key=lambda t: t[1]))
        object.__setattr__(self, "levels", lv)

    @property
    def energies(self) -> np.ndarray:
        return np.array([e for _, e in self.levels])

    @property
    def gap(self) -> float:
        e = self.energies
        return float(e[1] - e[0]) if len(e) > 1 else 0.0


@dataclass(frozen=True)
class MeanFieldSolution:
    order_parameter: float
    ground_energy: float
    spin_tilt: float
    phase_label: str  # "Normal" or "Ordered"
    squeezing: float = 0.0


@dataclass(frozen=True)
class CriticalExponents:
    beta_exp: float
    gamma_exp: float
    zeta_exp: float
    regime: str


QPT = CriticalExponents(0.5, 0.5, 1.0 / 3.0, "QPT")
CPT = CriticalExponents(0.5, 1.0, 0.5, "CPT")
NESS = CriticalExponents(0.5, 1.0, 0.5, "NESS")


# ---------------------------------------------------------------- chapter 1

def jc_doublet(n: int, g: float, omega: float, Omega: float) -> EffectiveSpectrum:
    """Jaynes-Cummings doublet in the sector {|down,n+1>, |up,n>}.

    Energies are measured from the ground state |down,0>:
    E = n w + (w + W)/2 +/- sqrt(D^2/4 + g^2 (n+1)), D = W - w.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    det = Omega - omega
    centre = n * omega + (omega + Omega) / 2.0
    split = np.sqrt(det**2 / 4.0 + g**2 * (n + 1))
    return EffectiveSpectrum(
        ((f"{n},-", centre - split), (f"{n},+", centre + split)),
        "rotating-wave regime g << w, W",
    )


def bloch_siegert_spectrum(n: int, g: float, omega: float, Omega: float) -> EffectiveSpectrum:
    """Ground level and the n-th doublet including the Bloch-Siegert shift.

    w_BS = g^2/(w + W).  Absolute energies of w a'a + W/2 sz + g x sx.
    """
    if n < 1:
        raise DomainError("doublet index n must be >= 1")
    wbs = g**2 / (omega + Omega)
    det = Omega - omega
    e0 = -Omega / 2.0 - wbs
    centre = (n - 0.5) * omega - wbs
    split = np.sqrt((det + 2 * n * wbs) ** 2 / 4.0 + n * g**2)
    return EffectiveSpectrum(
        (("0", e0), (f"{n},-", centre - split), (f"{n},+", centre + split)),
        "perturbative in g/(w+W); g/w <~ 0.3",
        extras={"omega_bs": wbs},
    )


def laguerre(n: int, x: float) -> float:
    """L_n(x) by the three-term recurrence."""
    if n < 0:
        raise DomainError("Laguerre degree must be >= 0")
    l0, l1 = 1.0, 1.0 - x
    if n == 0:
        return l0
    for k in range(1, n):
        l0, l1 = l1, ((2 * k + 1 - x) * l1 - k * l0) / (k + 1)
    return l1


def grwa_spectrum(n: int, alpha0: float, omega: float, Omega: float) -> EffectiveSpectrum:
    """Deep-strong-coupling doublet E = (n - a^2) w +/- (W/2) e^{-2a^2} L_n(4a^2), a = g/w."""
    if n < 0:
        raise DomainError("n must be >= 0")
    centre = (n - alpha0**2) * omega
    half = 0.5 * Omega * np.exp(-2 * alpha0**2) * laguerre(n, 4 * alpha0**2)
    return EffectiveSpectrum(
        ((f"{n},-", centre - abs(half)), (f"{n},+", centre + abs(half))),
        "qubit splitting perturbative: W <~ w, any g",
        extras={"signed_half_splitting": half},
    )


def grwa_levels(n_max: int, g: float, omega: float, Omega: float) -> np.ndarray:
    """All gRWA energies with n <= n_max, sorted."""
    a0 = g / omega
    return np.sort(np.concatenate([grwa_spectrum(n, a0, omega, Omega).energies for n in range(n_max + 1)]))


def vacuum_return_probability(alpha0: float, omega: float, t) -> np.ndarray:
    """Collapse-revival law P(0, t) = exp(2 a0^2 (cos wt - 1))."""
    return np.exp(2 * alpha0**2 * (np.cos(omega * np.asarray(t)) - 1.0))


def a2_renormalize(omega: float, Omega: float, g: float, r: float):
    """Renormalised frequency and coupling in presence of the A^2 term.

    Returns (omega_eff, g_eff, superradiance_possible).
    """
    if not r > 0:
        raise DomainError("r must be > 0")
    f = 1.0 + 4.0 * r * g**2 / (omega * Omega)
    w_eff = omega * np.sqrt(f)
    g_eff = g / f**0.25
    ratio = 4 * g_eff**2 / (w_eff * Omega)
    return w_eff, g_eff, bool(ratio >= 1.0)


def dicke_polaritons(omega: float, Omega: float, g_coll: float) -> EffectiveSpectrum:
    """Normal-phase polariton energies of the linearised Dicke model."""
    gp = np.sqrt(omega * Omega) / 2.0
    disc = np.sqrt((omega**2 - Omega**2) ** 2 + 16 * g_coll**2 * omega * Omega)
    e2m = 0.5 * (omega**2 + Omega**2 - disc)
    e2p = 0.5 * (omega**2 + Omega**2 + disc)
    if g_coll > gp * (1 + 1e-14):
        raise DomainError("g exceeds g_p: lower polariton imaginary, normal phase invalid")
    em = np.sqrt(max(e2m, 0.0))
    return EffectiveSpectrum((("E-", em), ("E+", np.sqrt(e2p))), "normal phase, N -> infinity")


# ---------------------------------------------------------------- chapter 2

def rabi_mean_field(lam: float, eta: float, omega: float = 1.0) -> MeanFieldSolution:
    """Coherent-state mean field of the Rabi model.

    alpha_g = sqrt(eta) sqrt((lam^4 - 1)/(4 lam^2)) for lam > 1.  The ground
    energy of the ordered branch is -(W/4)(lam^2 + lam^-2), the minimum of
    w a^2 - sqrt(W^2/4 + 4 g^2 a^2); it meets -W/2 at lam = 1 together with
    its first derivative.
    """
    if eta <= 0 or lam < 0:
        raise DomainError("eta must be > 0 and lambda >= 0")
    Omega = eta * omega
    if lam <= 1.0:
        return MeanFieldSolution(0.0, -Omega / 2.0, 0.0, "Normal")
    alpha = np.sqrt(eta) * np.sqrt((lam**4 - 1) / (4 * lam**2))
    energy = -(Omega / 4.0) * (lam**2 + lam**-2)
    tilt = float(np.arccos(1.0 / lam**2))
    return MeanFieldSolution(float(alpha), float(energy), tilt, "Ordered")


def rabi_effective_potential(lam: float, eta: float, phase: str, omega: float = 1.0) -> EffectiveSpectrum:
    """Quadratic or quartic effective field Hamiltonians.

    Normal:  w(p^2/4 + (1 - lam^2) x^2/4); squeezing xi = -ln(1 - lam^2)/4.
    Superradiant: same with 1 - lam^-4, around either displaced minimum.
    Quartic: coefficients of x^2 and x^4 (in units of w) near lam = 1.
    """
    if phase == "Normal":
        if not 0 <= lam < 1:
            raise DomainError("Normal phase requires 0 <= lambda < 1")
        k = 1 - lam**2
    elif phase == "Superradiant":
        if not lam > 1:
            raise DomainError("Superradiant phase requires lambda > 1")
        k = 1 - lam**-4
    elif phase == "Quartic":
        if eta <= 0:
            raise DomainError("eta must be > 0")
        return EffectiveSpectrum(
            (),
            "near lambda = 1, eta >> 1",
            extras={"quadratic": (1 - lam**2) / 4.0, "quartic": lam**4 / (16.0 * eta)},
        )
    else:
        raise DomainError(f"unknown phase {phase!r}")
    gap = omega * np.sqrt(k)
    xi = -0.25 * np.log(k)
    lv = tuple((f"{m}", m * gap) for m in range(4))
    return EffectiveSpectrum(lv, f"{phase} phase, eta -> infinity", squeezing=xi,
                             extras={"x2": k**-0.5, "p2": k**0.5})


def rabi_critical_ansatz(eta: float, lam: float = 1.0) -> float:
    """<x^2> = y of the squeezed-vacuum ansatz: root of -1/y^2 + (1-lam^2) + 3 lam^4 y/(2 eta)."""
    if eta < 10:
        raise DomainError("ansatz requires eta >= 10")
    c = 1.0 - lam**2
    q = 1.5 * lam**4 / eta
    roots = np.roots([q, c, 0.0, -1.0])
    good = [r.real for r in roots if abs(r.imag) < 1e-9 * max(1, abs(r)) and r.real > 0]
    if not good:
        raise DomainError("no real positive root")
    return float(min(good))


def finite_temperature(omega: float, Omega: float, T: float):
    """Thermal critical coupling and the squeezed-thermal field fluctuations.

    Returns (g_p(T), fluct) with fluct(lam) = (1-lam)^{-1/2} coth(w sqrt(1-lam)/T),
    lam measured from g_p(T).
    """
    if T < 0:
        raise DomainError("T must be >= 0")
    coth = (lambda z: 1.0 / np.tanh(z))
    gpt = np.sqrt(omega * Omega / 4.0 * (1.0 if T == 0 else coth(Omega / (2 * T))))

    def fluct(lam):
        lam = np.asarray(lam, dtype=float)
        s = np.sqrt(1 - lam)
        return s**-1 * (1.0 if T == 0 else coth(omega * s / T))

    return float(gpt), fluct


# ---------------------------------------------------------------- chapter 4

def two_photon_couplings(omega: float, Omega: float, N: int):
    """(g_p, g_c) of the two-photon Dicke model in the 2g/N normalisation."""
    return np.sqrt(omega * Omega * N / 4.0), omega / 2.0


def two_photon_energy(beta: float, g: float, omega: float, Omega: float, N: int) -> float:
    """Mean-field ground energy for a real HP amplitude beta."""
    ga = 2 * g * beta * np.sqrt(1 - beta**2)
    return np.sqrt(omega**2 / 4 - ga**2) + N * Omega * beta**2 - Omega * N / 2 - omega / 2


def two_photon_mean_field(g: float, omega: float, Omega: float, N: int) -> MeanFieldSolution:
    """Mean field of the two-photon Dicke model; beta is the HP order parameter."""
    gp, gc = two_photon_couplings(omega, Omega, N)
    if g >= gc:
        raise DomainError("g >= g_c = w/2: spectral collapse, model unbounded")
    if g <= gp:
        beta = 0.0
    else:
        r2, l4 = (g / gc) ** 2, (g / gp) ** 4
        beta = np.sqrt(0.5 * (1 - np.sqrt((1 - r2) / (l4 - r2))))
    ga = 2 * g * beta * np.sqrt(1 - beta**2)
    xi = 0.5 * np.arctanh(2 * ga / omega)
    tilt = float(np.arcsin(min(1.0, 2 * beta * np.sqrt(1 - beta**2))))
    return MeanFieldSolution(
        float(beta),
        float(two_photon_energy(beta, g, omega, Omega, N)),
        tilt,
        "Normal" if beta == 0 else "Ordered",
        squeezing=float(xi),
    )


def two_photon_phase_spectra(lam: float, g: float, g_c: float, Omega: float, n_levels: int = 4) -> EffectiveSpectrum:
    """Squeezed-Fock ladders of the HP mode in the normal and squeezed phases.

    Normal (lam < 1): xi = +ln(1 - lam^2)/4, E_m = m W sqrt(1 - lam^2).
    Squeezed (lam > 1, g < g_c), with r = g/g_c:
      xi = -ln(lam^4/(4(lam^4-1)) (1 + sqrt((1-r^2)/(lam^4-r^2)))^2)/4
      E_m = m W sqrt((lam^4 - r^2)(1 - lam^-4)/(1 - r^2)).
    """
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    if lam < 1:
        k = 1 - lam**2
        xi = 0.25 * np.log(k)
        w = Omega * np.sqrt(k)
        note = "normal phase"
        extras = {"wineland": float(np.exp(2 * xi))}
    elif lam > 1 and g < g_c:
        r2 = (g / g_c) ** 2
        l4 = lam**4
        xi = -0.25 * np.log(l4 / (4 * (l4 - 1)) * (1 + np.sqrt((1 - r2) / (l4 - r2))) ** 2)
        w = Omega * np.sqrt((l4 - r2) * (1 - 1 / l4) / (1 - r2))
        note = "squeezed phase"
        extras = {}
    else:
        raise DomainError("need lambda < 1, or lambda > 1 with g < g_c")
    return EffectiveSpectrum(tuple((f"{m}", m * w) for m in range(n_levels)), note,
                             squeezing=float(xi), extras=extras)


# ---------------------------------------------------------------- exponents

@dataclass(frozen=True)
class FitResult:
    slope: float
    stderr: float
    intercept: float
    expected: float | None = None

    def within(self, tol: float) -> bool:
        return self.expected is not None and abs(self.slope - self.expected) <= tol


def critical_exponent_fit(series: Sequence[tuple], expected: float | None = None, min_points: int = 6,
                          min_decades: float = 1.5) -> FitResult:
    """Least-squares slope of log(observable) against log(control)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("series must be a list of (control, observable) pairs")
    x, y = arr[:, 0], arr[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs strictly positive data")
    if len(x) < min_points:
        raise DomainError(f"need at least {min_points} points")
    if np.log10(x.max() / x.min()) < min_decades - 1e-12:
        raise DomainError(f"control range must span >= {min_decades} decades")
    res = stats.linregress(np.log(x), np.log(y))
    return FitResult(float(res.slope), float(res.stderr), float(res.intercept), expected)


def loglog_slope(x, y) -> float:
    """Plain log-log slope without the sampling preconditions."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
