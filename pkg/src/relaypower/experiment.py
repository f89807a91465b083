"""Monte Carlo sum-rate sweeps over total SNR, written as CSV.

Every trial draws one Rayleigh realization from its own seed and feeds the
same channels to every requested case, so case differences are paired.
Results are reduced in trial order, which makes the output independent of
how many worker processes ran the trials.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .asymptotic import solve_asymptotic
from .channel import ChannelStats, sample_network
from .global_allocator import ConvergenceError, solve_case1, solve_case3
from .metrics import sum_capacity
from .relay_allocator import SOURCE_MODES, optimize_delta, solve_case2, solve_case4

__all__ = [
    "CASES",
    "ExperimentConfig",
    "CurveRow",
    "SumRateCurve",
    "derive_trial_seed",
    "split_powers",
    "run_experiment",
    "write_csv",
    "main",
]

CASES = ("1", "2", "3", "4", "asym")
CSV_HEADER = ("snr_db", "case", "mean_sum_rate", "std_err", "trials", "delta_used")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
# xor-ed into the master seed for the delta calibration runs
_CALIBRATION_TAG = 0x5DE1A5EED


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit seed of trial ``trial_index``.

    SplitMix64: the master seed is mixed once, the trial index is added as
    ``(t + 1)`` golden-ratio increments and the sum is mixed again. Both
    steps are bijections on 64-bit words, so distinct indices below 2^64
    always give distinct seeds.
    """
    base = _splitmix64(int(master_seed) & _MASK64)
    return _splitmix64((base + (int(trial_index) + 1) * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class ExperimentConfig:
    cases: tuple[str, ...] = ("1", "2")
    n: int = 20
    tau: float = 1.0
    snr_db: tuple[float, ...] = tuple(float(s) for s in range(0, 41, 2))
    sigma2: float = 1.0
    trials: int = 2000
    master_seed: int = 0
    delta: float | None = None  # None: optimize per SNR point
    source_mode: str = "equal"
    out_path: str | None = None
    workers: int = 1
    calibration_trials: int | None = None
    delta_grid_step: float = 0.02

    def __post_init__(self) -> None:
        cases = tuple(str(c) for c in self.cases)
        bad = [c for c in cases if c not in CASES]
        if not cases or bad:
            raise ValueError(f"cases: expected a nonempty subset of {','.join(CASES)}, got {self.cases!r}")
        object.__setattr__(self, "cases", tuple(dict.fromkeys(cases)))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n: must be a positive integer, got {self.n!r}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau: must be > 0, got {self.tau!r}")
        if not self.snr_db:
            raise ValueError("snr_db: needs at least one point")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2: must be > 0, got {self.sigma2!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials: must be >= 1, got {self.trials!r}")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta: fixed value must lie in (0, 1), got {self.delta!r}")
        if self.source_mode not in SOURCE_MODES:
            raise ValueError(f"source_mode: expected one of {SOURCE_MODES}, got {self.source_mode!r}")
        if self.workers < 1:
            raise ValueError(f"workers: must be >= 1, got {self.workers!r}")
        if self.calibration_trials is not None and self.calibration_trials < 1:
            raise ValueError("calibration_trials: must be >= 1")

    @property
    def stats(self) -> ChannelStats:
        return ChannelStats(self.sigma2, self.sigma2, self.n)


@dataclass(frozen=True)
class CurveRow:
    snr_db: float
    case: str
    mean_sum_rate: float
    std_err: float
    trials: int
    delta_used: float | None = None


@dataclass
class SumRateCurve:
    rows: list[CurveRow] = field(default_factory=list)

    def get(self, snr_db: float, case: str) -> CurveRow:
        for r in self.rows:
            if r.snr_db == snr_db and r.case == case:
                return r
        raise KeyError((snr_db, case))

    def series(self, case: str) -> tuple[np.ndarray, np.ndarray]:
        """SNR points and mean sum rates of one case, in SNR order."""
        rows = sorted((r for r in self.rows if r.case == case), key=lambda r: r.snr_db)
        return np.array([r.snr_db for r in rows]), np.array([r.mean_sum_rate for r in rows])


def split_powers(snr_db: float, sigma2: float, tau: float) -> tuple[float, float]:
    """``(P_S, P_R)`` for a total SNR ``P sigma2`` split in the ratio ``tau``."""
    p = 10.0 ** (snr_db / 10.0) / sigma2
    return p / (1.0 + tau), tau * p / (1.0 + tau)


def _case1_rate(net, solver) -> float:
    try:
        return solver(net).sum_rate
    except ConvergenceError as err:
        # the best feasible point found is still a valid allocation
        if err.best is None:
            raise
        return err.best.sum_rate


def _trial_rates(t: int, cfg: ExperimentConfig, p_s: float, p_r: float, deltas: dict) -> list[float]:
    net = sample_network(cfg.stats, p_s, p_r, derive_trial_seed(cfg.master_seed, t))
    out = []
    for case in cfg.cases:
        if case == "1":
            out.append(_case1_rate(net, solve_case1))
        elif case == "3":
            out.append(_case1_rate(net, solve_case3))
        elif case == "2":
            out.append(solve_case2(net, deltas[case], cfg.source_mode).sum_rate)
        elif case == "4":
            out.append(solve_case4(net, deltas[case], cfg.source_mode).sum_rate)
        else:
            sol = solve_asymptotic(net)
            out.append(sum_capacity(sol.alphas, sol.betas, net))
    return out


def _calibrate(cfg: ExperimentConfig, p_s: float, p_r: float) -> float:
    if cfg.delta is not None:
        return cfg.delta
    seed = derive_trial_seed(cfg.master_seed ^ _CALIBRATION_TAG, 0)
    trials = cfg.calibration_trials or cfg.trials
    delta, _ = optimize_delta(cfg.stats, p_s, p_r, cfg.source_mode, cfg.delta_grid_step, trials, seed)
    return delta


def run_experiment(cfg: ExperimentConfig) -> SumRateCurve:
    curve = SumRateCurve()
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for snr in cfg.snr_db:
            p_s, p_r = split_powers(snr, cfg.sigma2, cfg.tau)
            deltas = {}
            if "2" in cfg.cases or "4" in cfg.cases:
                d = _calibrate(cfg, p_s, p_r)
                deltas = {"2": d, "4": d}
            work = partial(_trial_rates, cfg=cfg, p_s=p_s, p_r=p_r, deltas=deltas)
            idx = range(cfg.trials)
            if pool is None:
                rates = [work(t) for t in idx]
            else:
                chunk = max(1, cfg.trials // (8 * cfg.workers))
                rates = list(pool.map(work, idx, chunksize=chunk))
            rates = np.array(rates, dtype=float).reshape(cfg.trials, len(cfg.cases))
            mean = rates.mean(axis=0)
            if cfg.trials > 1:
                se = rates.std(axis=0, ddof=1) / math.sqrt(cfg.trials)
            else:
                se = np.zeros(len(cfg.cases))
            for j, case in enumerate(cfg.cases):
                curve.rows.append(
                    CurveRow(snr, case, float(mean[j]), float(se[j]), cfg.trials, deltas.get(case))
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return curve


def _fmt(x: float) -> str:
    return format(x, ".6g")


def write_csv(curve: SumRateCurve, path) -> None:
    """Write the curve sorted by ``(snr_db, case)``; ``path`` may also be an
    open text stream."""
    if hasattr(path, "write"):
        _write_rows(curve, path)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(curve, fh)


def _write_rows(curve: SumRateCurve, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(curve.rows, key=lambda r: (r.snr_db, r.case)):
        delta = "n/a" if r.delta_used is None else _fmt(r.delta_used)
        w.writerow([_fmt(r.snr_db), r.case, _fmt(r.mean_sum_rate), _fmt(r.std_err), r.trials, delta])


def parse_snr_range(text: str) -> tuple[float, ...]:
    """``START:STEP:STOP`` (stop included) or a single value."""
    parts = text.split(":")
    if len(parts) == 1:
        return (float(parts[0]),)
    if len(parts) != 3:
        raise ValueError(f"snr-db: expected START:STEP:STOP, got {text!r}")
    start, step, stop = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError(f"snr-db: need STEP > 0 and STOP >= START, got {text!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + k * step, 10) for k in range(count))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relaypower-experiment", description="Sum-rate vs SNR sweeps for the AF relay allocators.")
    p.add_argument("--cases", default="1,2", help="comma list from 1,2,3,4,asym (default 1,2)")
    p.add_argument("--n", type=int, default=20, help="number of subchannels")
    p.add_argument("--tau", type=float, default=1.0, help="relay-to-source power ratio")
    p.add_argument("--snr-db", default="0:2:40", help="START:STEP:STOP in dB, stop included")
    p.add_argument("--sigma2", type=float, default=1.0, help="fading variance")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--delta", default="auto", help="rate back-off for cases 2 and 4, or 'auto'")
    p.add_argument("--source-alloc", default="equal", choices=SOURCE_MODES)
    p.add_argument("--workers", type=int, default=1, help="worker processes; output does not depend on it")
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    delta = None if args.delta == "auto" else _parse_delta(args.delta)
    return ExperimentConfig(
        cases=tuple(c.strip() for c in args.cases.split(",") if c.strip()),
        n=args.n,
        tau=args.tau,
        snr_db=parse_snr_range(args.snr_db),
        sigma2=args.sigma2,
        trials=args.trials,
        master_seed=args.seed,
        delta=delta,
        source_mode=args.source_alloc,
        out_path=args.out,
        workers=args.workers,
    )


def _parse_delta(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"delta: expected 'auto' or a number, got {text!r}") from None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        curve = run_experiment(cfg)
        if cfg.out_path in (None, "-"):
            write_csv(curve, sys.stdout)
        else:
            write_csv(curve, cfg.out_path)
    except (ValueError, OSError) as err:
        print(f"relaypower-experiment: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
