"""Acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (repeated in the terminal summary).
The Monte Carlo sweeps share cached runs; the whole module takes about half
an hour on one core.
"""

import time

import numpy as np
import pytest

from conftest import random_net, report
from oracles import central_grad, central_hessian, grid_case1, link_rate
from relaypower.asymptotic import check_inverse_waterfilling, solve_asymptotic
from relaypower.channel import NetworkRealization
from relaypower.experiment import ExperimentConfig, run_experiment
from relaypower.global_allocator import solve_case1, verify_kkt
from relaypower.metrics import sum_capacity_alpha, sum_capacity_alpha_grad
from relaypower.relay_allocator import brute_force_select, make_source_plan, min_relay_fraction, solve_case2

pytestmark = pytest.mark.slow

TRIALS = 2000
SWEEP = tuple(float(s) for s in range(0, 41, 2))
_runs = {}


def sweep(key, **kwargs):
    """Cached experiment runs shared between criteria."""
    if key not in _runs:
        t0 = time.perf_counter()
        curve = run_experiment(ExperimentConfig(trials=TRIALS, **kwargs))
        _runs[key] = (curve, time.perf_counter() - t0)
    return _runs[key]


def crossing_db(snr, rate, level):
    """SNR where a rising curve first reaches ``level`` (linear in dB)."""
    k = int(np.argmax(rate >= level))
    if rate[k] < level or k == 0:
        return np.nan
    t = (level - rate[k - 1]) / (rate[k] - rate[k - 1])
    return snr[k - 1] + t * (snr[k] - snr[k - 1])


def test_theorem1_consistency():
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst_res = 0.0
    worst_budget = 0.0
    over = 0.0
    for i in range(1000):
        tau = (0.5, 1.0, 2.0)[i % 3]
        snr = (10.0, 20.0, 30.0)[(i // 3) % 3]
        net = random_net(rng, 5, snr_db=snr, tau=tau)
        a = solve_case1(net)
        worst_res = max(worst_res, float(np.max(verify_kkt(net, a))))
        sums = np.array([a.alphas.sum(), a.betas.sum()])
        over = max(over, float(np.max(sums - 1.0)))
        active = np.array(a.multipliers) > 0
        if active.all():
            worst_budget = max(worst_budget, float(np.max(1.0 - sums)))
    elapsed = time.perf_counter() - t0
    ok = worst_res < 1e-6 and worst_budget <= 1e-6 and over <= 0.0 and elapsed < 60
    report(
        "Theorem-1 consistency",
        ok,
        f"max residual {worst_res:.2e}, max budget shortfall (both active) {worst_budget:.2e}, "
        f"max overspend {over:.1e}, {elapsed:.1f} s",
    )
    assert ok


def test_oracle_global():
    rng = np.random.default_rng(2002)
    t0 = time.perf_counter()
    worst = -np.inf
    for i in range(200):
        n = 2 + i % 2
        net = random_net(rng, n, snr_db=float(rng.choice([0, 5, 10, 20, 30])), tau=float(rng.choice([0.5, 1, 2])))
        ref, _ = grid_case1(net.g2, net.h2, net.p_s, net.p_r, step=1e-3)
        worst = max(worst, ref - solve_case1(net).sum_rate)
    elapsed = time.perf_counter() - t0
    ok = worst <= 5e-3 and elapsed < 300
    report("Oracle equivalence, global", ok, f"largest shortfall vs grid {worst:.2e} bits, {elapsed:.1f} s")
    assert ok


def test_oracle_greedy():
    rng = np.random.default_rng(3003)
    t0 = time.perf_counter()
    equal = 0
    above = 0
    gaps = []
    for _ in range(1000):
        net = random_net(rng, 8, snr_db=15.0, tau=1.0)
        plan = make_source_plan(net, 0.5)
        costs = [min_relay_fraction(plan, net, i) for i in range(8)]
        g = solve_case2(net, 0.5).sum_rate
        b = brute_force_select(costs, plan.gammas).sum_rate
        equal += g == b
        above += g > b + 1e-12
        gaps.append((b - g) / b if b > 0 else 0.0)
    elapsed = time.perf_counter() - t0
    frac = equal / 1000
    ok = frac >= 0.95 and above == 0 and np.mean(gaps) < 0.01 and elapsed < 60
    report(
        "Oracle equivalence, greedy",
        ok,
        f"greedy optimal in {frac:.1%}, above oracle {above} times, mean gap {np.mean(gaps):.2%}, {elapsed:.1f} s",
    )
    assert ok


def test_fig2_more_links_more_rate():
    big, _ = sweep("n20", cases=("1", "2", "3", "4"), n=20, tau=1.0, snr_db=SWEEP, master_seed=20)
    small, _ = sweep("n4", cases=("1",), n=4, tau=1.0, snr_db=SWEEP, master_seed=20)
    snr, r20 = big.series("1")
    _, r4 = small.series("1")
    ok = bool(np.all(r20 > r4))
    report("Fig. 2 behavior", ok, f"min (n=20 - n=4) gap {np.min(r20 - r4):.3f} bits over {len(snr)} SNR points")
    assert ok


def test_fig4_gap():
    curve, elapsed = sweep("fig4", cases=("1", "2"), n=20, tau=1.0, snr_db=(4.0, 6.0, 8.0, 10.0, 12.0, 14.0), master_seed=44)
    s1, r1 = curve.series("1")
    s2, r2 = curve.series("2")
    gap = crossing_db(s2, r2, 2.0) - crossing_db(s1, r1, 2.0)
    ok = abs(gap - 4.5) <= 1.5 and elapsed < 600 and bool(np.all(r1 > r2))
    report("Fig. 4 gap", ok, f"horizontal gap at 2 bits {gap:.2f} dB (target 4.5 +- 1.5), {elapsed:.0f} s")
    assert ok


def test_fig45_convergence():
    big, _ = sweep("n20", cases=("1", "2", "3", "4"), n=20, tau=1.0, snr_db=SWEEP, master_seed=20)
    half, _ = sweep("tau05", cases=("1", "2"), n=20, tau=0.5, snr_db=(10.0, 40.0), master_seed=45)
    details = []
    ok = True
    for tau, curve in ((1.0, big), (0.5, half)):
        r10 = curve.get(10.0, "1").mean_sum_rate
        r40 = curve.get(40.0, "1").mean_sum_rate
        d10 = r10 - curve.get(10.0, "2").mean_sum_rate
        d40 = r40 - curve.get(40.0, "2").mean_sum_rate
        ok &= d40 < d10
        details.append(
            f"tau={tau}: I-II {d10:.3f} bits ({d10 / r10:.1%} of I) at 10 dB, "
            f"{d40:.3f} bits ({d40 / r40:.1%}) at 40 dB"
        )
    report("Figs. 4-5 convergence", ok, "; ".join(details))
    assert ok


def test_fig78_orderings():
    curve, _ = sweep("n20", cases=("1", "2", "3", "4"), n=20, tau=1.0, snr_db=SWEEP, master_seed=20)
    snr, r1 = curve.series("1")
    _, r2 = curve.series("2")
    _, r3 = curve.series("3")
    _, r4 = curve.series("4")
    high = snr >= 30
    ok31 = bool(np.all(r3 >= r1))
    ok42 = bool(np.all(r4 >= r2))
    ok41 = bool(np.all(r4[high] > r1[high]))
    bad = ", ".join(f"{s:g} dB: IV {a:.2f} vs I {b:.2f}" for s, a, b in zip(snr[high], r4[high], r1[high]) if a <= b)
    detail = (
        f"III>=I at all points: {ok31} (min diff {np.min(r3 - r1):.3f}); "
        f"IV>=II at all points: {ok42} (min diff {np.min(r4 - r2):.3f}); "
        f"IV>I for SNR>=30 dB: {ok41}" + (f" [{bad}]" if bad else "")
    )
    ok = ok31 and ok42 and ok41
    report("Figs. 7/8 orderings", ok, detail)
    assert ok


def test_asymptotic_convergence():
    rng = np.random.default_rng(6006)
    net = random_net(rng, 5)
    gaps = []
    for db in (40.0, 50.0, 60.0):
        p = 10 ** (db / 10)
        n = net.with_budgets(p / 2, p / 2)
        gaps.append(float(np.max(np.abs(solve_case1(n).alphas - solve_asymptotic(n).alphas))))
    ok = gaps[2] < 0.02 and gaps[0] > gaps[1] > gaps[2]
    report("Asymptotic convergence", ok, "max |alpha gap| at 40/50/60 dB: " + ", ".join(f"{g:.2e}" for g in gaps))
    assert ok


def test_inverse_waterfilling():
    rng = np.random.default_rng(7007)
    held = 0
    tried = 0
    while tried < 1000:
        n = int(rng.integers(2, 9))
        h = float(rng.exponential())
        g2 = rng.exponential(size=n) * rng.uniform(1, 4)
        net = NetworkRealization(g2, np.full(n, h), 10.0, float(rng.choice([0.5, 1.0, 2.0])) * 10.0)
        sol = solve_asymptotic(net)
        if sol.lambda2 <= 0:
            continue
        tried += 1
        held += check_inverse_waterfilling(sol, net)
    ok = held == tried
    report("Inverse water-filling", ok, f"property held on {held}/{tried} equal-h2 instances with lambda2 > 0")
    assert ok


def test_numerical_hygiene_gradient():
    rng = np.random.default_rng(8008)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 8))
        net = NetworkRealization(rng.exponential(size=n), rng.exponential(size=n), 10 ** rng.uniform(-1, 3), 10 ** rng.uniform(-1, 3))
        a = rng.uniform(0.02, 1.0, n) / n
        g = sum_capacity_alpha_grad(a, net)
        fd = central_grad(lambda v: sum_capacity_alpha(v, net), a, h=1e-4 * a)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(g), 1e-12))))
    ok = worst < 1e-5
    report("Numerical hygiene (gradient)", ok, f"max relative error vs central differences {worst:.2e}")
    assert ok


def test_numerical_hygiene_hessian():
    # Hessian of log2(1 + rho) in (P_S_i, P_R_i); uniform powers in [0, 10]
    # and unit-mean exponential gains
    rng = np.random.default_rng(9009)
    bad = 0
    worst = 0.0
    low_snr = 0
    for _ in range(1000):
        g2, h2 = rng.exponential(size=2)
        ps, pr = rng.uniform(0.0, 10.0, 2)
        H = central_hessian(lambda v: float(link_rate(v[0], v[1], g2, h2)), np.array([ps, pr]), h=1e-4)
        top = float(np.max(np.linalg.eigvalsh(H)))
        if top > 1e-5:
            bad += 1
            worst = max(worst, top)
            low_snr += ps * g2 * pr * h2 < 0.5
    ok = bad == 0
    report(
        "Numerical hygiene (Hessian NSD)",
        ok,
        f"{bad}/1000 points with a positive eigenvalue (largest {worst:.2e}); "
        f"{low_snr} of them have hop-SNR product below 1/2",
    )
    assert ok


def test_determinism(tmp_path):
    from relaypower.experiment import write_csv

    cfg = dict(cases=("1", "2", "3", "4", "asym"), n=6, tau=1.0, snr_db=(0.0, 20.0), trials=40, master_seed=5, calibration_trials=20)
    paths = []
    for i, workers in enumerate((1, 1, 3)):
        p = tmp_path / f"run{i}.csv"
        write_csv(run_experiment(ExperimentConfig(workers=workers, **cfg)), p)
        paths.append(p.read_bytes())
    ok = paths[0] == paths[1] == paths[2]
    report("Determinism", ok, "two serial runs and a 3-worker run give byte-identical CSV" if ok else "CSV differs")
    assert ok
