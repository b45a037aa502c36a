"""Acceptance criteria, one test each.

Every test evaluates all of its sub-checks before asserting, records a single
summary line (printed at the end of the session) and fails if any sub-check
misses its tolerance.  Tolerances are the stated ones; nothing is loosened.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import optimize

from conftest import ACCEPTANCE_LINES
from oracles import fock_state_lowrank, ground_state_fidelity_qfi, mz_generator, sld_qfi_lowrank
from qcrit import cli
from qcrit import critical_protocol as cp
from qcrit import dissipative_dynamics as dd
from qcrit import effective_models as em
from qcrit import fock_core as fc
from qcrit import gaussian_metrology as gm
from qcrit import sw_engine as sw

GOLDEN = Path(__file__).parent / "golden"


class Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.checks: list[tuple[str, bool, str]] = []
        self.t0 = time.perf_counter()

    def check(self, name: str, ok, detail: str = ""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def finish(self):
        ok = all(c[1] for c in self.checks)
        parts = "; ".join(f"{n} {'ok' if p else 'MISS'} ({d})" if d else f"{n} {'ok' if p else 'MISS'}"
                          for n, p, d in self.checks)
        line = f"[{'PASS' if ok else 'FAIL'}] {self.number:>2}. {self.title}: {parts}"
        ACCEPTANCE_LINES[self.number] = line
        print(line)
        assert ok, line


# ---------------------------------------------------------------- 1

def test_acc01_spectral_collapse():
    c = Criterion(1, "two-photon Rabi spectral collapse")
    for g in (0.3, 0.45):
        s = fc.diagonalize(fc.build_hamiltonian("two-photon-rabi", fc.ModelParams(1.0, 1.9, g), 400), 4)
        c.check(f"g={g} levels converged", s.converged.all(), f"max margin {s.convergence_margin.max():.1e}")
    for g in (0.55, 0.6):
        rows = fc.ground_energy_margins("two-photon-rabi", fc.ModelParams(1.0, 1.9, g), [200, 400, 800])
        m = [r[2] for r in rows]
        c.check(f"g={g} margin grows", m[0] < m[1] < m[2], ", ".join(f"{x:.3g}" for x in m))
    c.check("runtime < 60 s", c.elapsed < 60, f"{c.elapsed:.1f} s")
    c.finish()


# ---------------------------------------------------------------- 2

def test_acc02_critical_exponents():
    c = Criterion(2, "critical exponents")
    d = np.logspace(-5, -2, 10)
    x2 = [em.rabi_effective_potential(1 - t, 100.0, "Normal").extras["x2"] for t in d]
    gamma = -em.critical_exponent_fit(np.column_stack([d, x2])).slope
    c.check("gamma", abs(gamma - 0.5) <= 0.02, f"{gamma:.4f}")
    etas = [50.0, 100.0, 200.0, 400.0, 800.0]
    vals = []
    for eta in etas:
        s = fc.diagonalize(fc.build_hamiltonian("Rabi", fc.ModelParams.from_lambda(1.0, eta), 200), 1)
        vals.append(fc.quadrature_x2(s.eigenvectors[:, 0], 2, 200))
    zeta = em.critical_exponent_fit(np.column_stack([etas, vals]), min_points=5, min_decades=1.0).slope
    c.check("zeta", abs(zeta - 1 / 3) <= 0.05, f"{zeta:.4f}")
    c.check("runtime < 10 min", c.elapsed < 600, f"{c.elapsed:.1f} s")
    c.finish()


# ---------------------------------------------------------------- 3

def test_acc03_qfi_concordance():
    c = Criterion(3, "QFI concordance at eta=100")
    eta, gp = 100.0, 5.0
    for lam in (0.5, 0.7, 0.9):
        g = lam * gp
        exact = cp.qfi_exact_normal(g, eta)
        ref = ground_state_fidelity_qfi(eta, g, 1.0, cutoff=160)
        c.check(f"lambda={lam} vs fidelity oracle", abs(exact / ref - 1) <= 0.05, f"oracle/closed {ref / exact:.3f}")
    fi_dev, hom_dev = 0.0, 0.0
    for lam in (0.5, 0.7, 0.9):
        g = lam * gp
        q = cp.qfi_exact_normal(g, eta)
        fi = cp.photon_number_fi(float(cp.squeezing(lam)), cp.dxi_dOmega(g, eta))
        fi_dev = max(fi_dev, abs(fi / q - 1))
        for phi in (0.0, np.pi / 2):
            hom_dev = max(hom_dev, abs(cp.homodyne_fi(lam, eta, phi) / q - 1))
    c.check("photon-number FI", fi_dev <= 1e-8, f"{fi_dev:.1e}")
    c.check("homodyne x and p", hom_dev <= 1e-8, f"{hom_dev:.1e}")
    c.finish()


# ---------------------------------------------------------------- 4

def test_acc04_adiabaticity():
    c = Criterion(4, "adiabatic ramp excitation")
    gp = 5.0
    c2 = {v: cp.adiabatic_excitation(cp.RampSchedule(v, 0.9 * gp, gp), 100.0)["c2_final_sq"]
          for v in (0.025, 0.05, 0.1)}
    pred = 0.05**2 / 32 * 0.81
    c.check("c2 vs prediction", abs(c2[0.05] / pred - 1) <= 0.2, f"ratio {c2[0.05] / pred:.3f}")
    up = c2[0.1] / c2[0.05]
    c.check("doubling 0.05->0.1", abs(up - 4) <= 0.5, f"{up:.3f}")
    down = c2[0.05] / c2[0.025]
    c.check("doubling 0.025->0.05", abs(down - 4) <= 0.5, f"{down:.3f}")
    c.finish()


# ---------------------------------------------------------------- 5

def test_acc05_time_scalings():
    c = Criterion(5, "time scalings")
    s4 = cp.tau4_scaling(0.05, 1e4, np.linspace(0.9, 0.999, 12))["slope"]
    c.check("Hamiltonian tau^4", abs(s4 - 4) <= 0.1, f"{s4:.4f}")
    s2 = dd.dissipative_qfi_scaling(dd.CovarianceParams(1.0, 1.0, 0.0, 1.0, 3.0),
                                    [0.9, 0.95, 0.99, 0.995, 0.999])["slope"]
    c.check("dissipative tau^2", abs(s2 - 2) <= 0.1, f"{s2:.4f}")
    sr = cp.ramsey_baseline(np.logspace(0, 2, 8)).slope
    c.check("static baseline", abs(sr - 2) <= 0.05, f"{sr:.4f}")
    c.finish()


# ---------------------------------------------------------------- 6

def test_acc06_dissipative_rabi():
    c = Criterion(6, "dissipative Rabi steady state")
    base = dd.CovarianceParams(1.0, 1.0, 0.0, 1.0, 0.5)
    worst_ode, worst_rate = 0.0, 0.0
    for frac in (0.8, 0.95):
        p = base.replace(g=frac * base.g_pD)
        r = dd.relaxation_rate(p)
        s = dd.integrate_covariance(p, 20 / r["mu_tilde_plus"])
        worst_ode = max(worst_ode, np.max(np.abs(s - dd.covariance_closed_form(p))))
        worst_rate = max(worst_rate, abs(r["measured"] / r["mu_tilde_plus"] - 1))
    c.check("ODE -> closed form", worst_ode <= 1e-8, f"{worst_ode:.1e}")
    c.check("relaxation vs mu+", worst_rate <= 0.02, f"{worst_rate:.2%}")
    fr = [0.99, 0.995, 0.999]
    off = dd.dissipative_qfi_scaling(dd.CovarianceParams(1.0, 1.0, 0.0, 1.0, 3.0), fr)["ratio_last"]
    on = dd.dissipative_qfi_scaling(dd.CovarianceParams(1.0, 1.0, 0.0, 1.0, 1.0), fr)["ratio_last"]
    c.check("Gamma=Omega suppression", on < 1e-3 * off, f"{on / off:.1e}")
    c.finish()


# ---------------------------------------------------------------- 7

def _b_edges(Omega, N, rates, g_hi=8.0):
    """Lower and upper coupling edges of the bistable window, located by bisection on the label."""
    label = lambda g: dd.classify_phase(dd.TwoPhotonParams(1.0, Omega, g, N), rates).label  # noqa: E731
    gs = np.linspace(0.01, g_hi, 400)
    labs = [label(g) for g in gs]
    idx = [i for i, lab in enumerate(labs) if lab == dd.PhaseLabel.BISTABLE]
    if not idx:
        return np.nan, np.nan

    def edge(a, b, inside_right):
        for _ in range(60):
            m = 0.5 * (a + b)
            if (label(m) == dd.PhaseLabel.BISTABLE) == inside_right:
                b = m
            else:
                a = m
        return 0.5 * (a + b)

    lo = edge(gs[idx[0] - 1], gs[idx[0]], True) if idx[0] > 0 else gs[0]
    hi = edge(gs[idx[-1]], gs[idx[-1] + 1], False) if idx[-1] + 1 < len(gs) else gs[-1]
    return lo, hi


def test_acc07_two_photon_phase_structure():
    c = Criterion(7, "two-photon dissipative phase structure")
    rates3 = dd.DissipationRates(1.0, 3.0, 3.0)
    N = 100
    gpD = dd.two_photon_threshold(1.0, 1.0, rates3)
    # (a) residuals
    worst = 0.0
    for r in (rates3, dd.DissipationRates(1.0, 1.5, 1.5), dd.DissipationRates(0.5, 2.0, 0.3)):
        for frac in np.linspace(0.1, 3.0, 30):
            p = dd.TwoPhotonParams(1.0, 1.0, frac * dd.two_photon_threshold(1.0, 1.0, r), N)
            worst = max(worst, max(dd.two_photon_steady_states(p, r).residuals) / N)
    c.check("(a) residual/N", worst <= 1e-8, f"{worst:.1e}")
    # (b) Jacobians
    jac = 0.0
    for frac in (0.5, 0.9, 1.2, 2.0):
        p = dd.TwoPhotonParams(1.0, 1.0, frac * gpD, N)
        f = lambda v: dd.two_photon_mf_rhs(v, p, rates3)  # noqa: E731
        jac = max(jac, np.max(np.abs(dd.fd_jacobian(f, dd.normal_point(N)) - dd.matrix_normal(p, rates3))))
        for v in dd.two_photon_steady_states(p, rates3).superradiant:
            J = dd.fd_jacobian(f, v)
            jac = max(jac, np.max(np.abs(J - dd.matrix_superradiant(v, p, rates3))) / max(1, np.max(np.abs(J))))
    c.check("(b) M_N/M_S vs FD", jac <= 1e-6, f"{jac:.1e}")
    # (c) bistable window
    labels = [dd.classify_phase(dd.TwoPhotonParams(1.0, 1.0, f * gpD, N), rates3).label
              for f in np.linspace(0.05, 1.5, 59)]
    c.check("(c) bistable window", dd.PhaseLabel.BISTABLE in labels,
            f"{labels.count(dd.PhaseLabel.BISTABLE)}/59 points")

    # (d) superradiant stability flip in Gamma
    def sr_max_re(G):
        p = dd.TwoPhotonParams(1.0, 1.0, 1.0, N)
        return dd.classify_phase(p, dd.DissipationRates(1.0, G, G)).max_re_superradiant

    Gc = optimize.brentq(sr_max_re, 1.0, 3.0, xtol=1e-8)
    c.check("(d) flip at 1.6+-0.2", abs(Gc - 1.6) <= 0.2, f"Gamma/omega = {Gc:.3f}")
    # (e) N-invariance of the bistable window
    drift = 0.0
    for Omega in (0.5, 1.0, 2.0):
        e50 = _b_edges(Omega, 50, rates3)
        e100 = _b_edges(Omega, 100, rates3)
        drift = max(drift, *(abs(a / b - 1) for a, b in zip(e100, e50)))
    c.check("(e) boundary drift 50->100", drift < 0.02, f"{drift:.1%}")
    t0 = time.perf_counter()
    rows = dd.phase_diagram(np.linspace(0.05, 5, 100), np.linspace(0.1, 3, 100), rates3, N, threads=4)
    t_grid = time.perf_counter() - t0
    c.check("100x100 grid < 15 min", len(rows) == 10000 and t_grid < 900, f"{t_grid:.1f} s")
    c.finish()


# ---------------------------------------------------------------- 8

def test_acc08_gaussian_metrology():
    c = Criterion(8, "Gaussian metrology")
    rng = np.random.default_rng(2024)
    zero_bad, squeezed_bad, cross = 0, 0, 0.0
    for i in range(1000):
        p = gm.random_params(rng)
        if i % 2:
            p = p.replace(xi1=0.0, xi2=0.0)
        s = gm.williamson_build(p)
        adv = gm.metrological_advantage(s).advantage
        if i % 2:
            zero_bad += abs(adv) > 1e-10
        else:
            squeezed_bad += not adv > 1e-10
        red = p.replace(theta=0.0, Psi=0.0)
        q_iso = gm.qfi_channel(gm.williamson_build(red))
        cross = max(cross, abs(gm.qfi_two_mode_explicit(red) - q_iso) / max(1.0, q_iso))
    c.check("advantage 0 without squeezing", zero_bad == 0, f"{zero_bad}/500 violations")
    c.check("advantage > 0 with squeezing", squeezed_bad == 0, f"{squeezed_bad}/500 violations")
    edge = gm.metrological_advantage(gm.williamson_build(gm.WilliamsonParams(nu=1.0, xi1=0.4, gamma_abs=2.0)))
    c.check("pure edge case attains FTQL", edge.advantage == 0.0 and abs(edge.qfi_opt / edge.qfi_ref - 1) <= 1e-12,
            f"qfi/ftql - 1 = {edge.qfi_opt / edge.qfi_ref - 1:.1e}")
    c.check("explicit vs isotropic", cross <= 1e-8, f"{cross:.1e}")
    fock = 0.0
    for seed in range(5):
        p = gm.random_params(np.random.default_rng(seed), nu_max=1.1, xi_max=0.2, gamma_max=0.6)
        w, V, ops = fock_state_lowrank(p, 40)
        fock = max(fock, abs(sld_qfi_lowrank(w, V, mz_generator(*ops)) / gm.qfi_channel(gm.williamson_build(p)) - 1))
    c.check("Fock oracle at cutoff 40", fock <= 0.01, f"{fock:.1e}")
    c.finish()


# ---------------------------------------------------------------- 9

def test_acc09_separability():
    c = Criterion(9, "separability of displaced thermal states")
    worst_pt, worst_char = np.inf, 0.0
    for mod in np.linspace(0, 3, 20):
        for theta in np.linspace(0, 0.95, 20):
            r = gm.separability_check_n2(mod * np.exp(0.7j), theta)
            worst_pt = min(worst_pt, float(np.min(r["pt_eigenvalues"])))
            for k in ("e1", "e2", "e3"):
                scale = max(1.0, abs(r["char_closed"][k]))
                worst_char = max(worst_char, abs(r["char_sums"][k] - r["char_closed"][k]) / scale)
    c.check("PT eigenvalues", worst_pt >= -1e-10, f"min {worst_pt:.2e}")
    c.check("characteristic sums", worst_char <= 1e-9, f"{worst_char:.1e}")
    c.finish()


# ---------------------------------------------------------------- 10

def test_acc10_sw_engine():
    c = Criterion(10, "Schrieffer-Wolff engine")
    slopes = {cls: sw.residual_exponent(cls, 0.5)[1][-1] for cls in sw.CLASSES}
    c.check("order-4 residual exponent", all(abs(s - 5) <= 0.3 for s in slopes.values()),
            ", ".join(f"{k} {v:.2f}" for k, v in slopes.items()))
    worst = {"quoted": (0.0, ""), "corrected": (0.0, "")}
    for cls in sw.CLASSES:
        for eps in (0.2, 0.1, 0.05):
            r = sw.sw_transform(cls, eps, 0.5)
            for table in worst:
                x = r.blockdiag_deviation[table] / (eps**5 * r.h_norm)
                if x > worst[table][0]:
                    worst[table] = (x, f"{cls} eps={eps}")
    c.check("quoted closed forms within eps^5 |H|", worst["quoted"][0] <= 1,
            f"worst {worst['quoted'][0]:.2f} at {worst['quoted'][1]}")
    c.check("corrected closed forms within eps^5 |H|", worst["corrected"][0] <= 1,
            f"worst {worst['corrected'][0]:.2f}")
    flags = [sw.boson_boson_instability_check(0.3, lam)[0] for lam in (1.9, 2.0, 2.1)]
    below = [sw.boson_boson_ground_energy(0.3, 1.9, n) for n in (15, 30, 45)]
    above = [sw.boson_boson_ground_energy(0.3, 2.1, n) for n in (15, 30, 45)]
    c.check("threshold at lambda=2", flags == [False, True, True]
            and abs(below[2] - below[1]) < 1e-8 and above[2] < above[1] < above[0],
            f"E(45)-E(30): {below[2] - below[1]:.1e} below, {above[2] - above[1]:.2f} above")
    c.finish()


# ---------------------------------------------------------------- 11

def test_acc11_closed_form_spectra():
    c = Criterion(11, "closed-form spectra")
    exact = lambda W, g, n, cut: fc.diagonalize(  # noqa: E731
        fc.build_hamiltonian("Rabi", fc.ModelParams(1.0, W, g), cut), n).eigenvalues
    bs = em.bloch_siegert_spectrum(1, 0.1, 1.0, 1.0).energies[0]
    d_bs = abs(bs - exact(1.0, 0.1, 1, 100)[0])
    c.check("Bloch-Siegert ground energy", d_bs <= 1e-3, f"{d_bs:.1e}")
    d_g = np.max(np.abs(em.grwa_levels(5, 1.2, 1.0, 1 / 3)[:6] - exact(1 / 3, 1.2, 6, 120)))
    c.check("gRWA levels 0..5", d_g <= 0.02, f"{d_g:.1e}")
    e_minus = em.dicke_polaritons(1.0, 2.0, np.sqrt(2.0) / 2).energies[0]
    c.check("polariton E- at g_p", abs(e_minus) <= 1e-10, f"{abs(e_minus):.1e}")
    c.finish()


# ---------------------------------------------------------------- 12

def test_acc12_cli_determinism(tmp_path):
    c = Criterion(12, "CLI determinism and golden coverage")
    cmds = sorted(p.name for p in GOLDEN.iterdir() if p.is_dir())
    c.check("one golden per command", cmds == sorted(cli.COMMANDS), f"{len(cmds)} datasets")
    identical, golden_ok = [], []
    for cmd in cmds:
        cfg = json.loads((GOLDEN / cmd / "config.json").read_text())
        name = f"{cmd.replace('-', '_')}.csv"
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"{cmd}-{threads}"
            cli.run(cmd, {**cfg, "output": str(out)}, threads=threads)
            outs.append((out / name).read_bytes())
        identical.append(outs[0] == outs[1])
        rep = cli.compare_golden(tmp_path / f"{cmd}-1" / name, GOLDEN / cmd / name, default_rtol=1e-8, atol=1e-12)
        golden_ok.append(rep["pass"])
    c.check("byte-identical across thread counts", all(identical), f"{sum(identical)}/{len(cmds)}")
    c.check("golden comparison", all(golden_ok), f"{sum(golden_ok)}/{len(cmds)}")
    c.finish()
