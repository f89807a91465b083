"""High-SNR closed forms for the full-CSI allocation.

When both budgets grow the end-to-end SNR of link ``i`` tends to
``alpha_i phi_i P_S`` with ``phi_i = |h_i||g_i| / (1 + |h_i|/|g_i|)``. The
rate then separates into ``sum log(alpha_i phi_i)`` plus a constant, to be
maximized under ``sum alpha <= 1`` and ``(1/tau) sum alpha_i |g_i|/|h_i| <= 1``.
Stationarity gives ``alpha_i = 1 / (lam1 + (lam2/tau) |g_i|/|h_i|)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel import NetworkRealization, Subchannel
from .metrics import DegenerateChannelError

__all__ = [
    "AsymptoticSolution",
    "AsymptoticConvergenceError",
    "asymptotic_phi",
    "asymptotic_link_snr",
    "asymptotic_sum_rate",
    "solve_asymptotic",
    "asymptotic_beta_closed_form",
    "fit_beta_multipliers",
    "check_inverse_waterfilling",
]

_XTOL = 1e-15
_RTOL = 1e-15


@dataclass(frozen=True)
class AsymptoticSolution:
    alphas: np.ndarray
    betas: np.ndarray
    lambda1: float
    lambda2: float
    phi: np.ndarray


class AsymptoticConvergenceError(RuntimeError):
    def __init__(self, message: str, best: AsymptoticSolution | None):
        super().__init__(message)
        self.best = best


def asymptotic_phi(g2, h2):
    """``|h||g| / (1 + |h|/|g|)`` from squared magnitudes."""
    g = np.sqrt(np.asarray(g2, dtype=float))
    h = np.sqrt(np.asarray(h2, dtype=float))
    if np.any(g <= 0) or np.any(h <= 0):
        raise DegenerateChannelError("the asymptotic form needs nonzero gains")
    return h * g / (1.0 + h / g)


def asymptotic_link_snr(alpha: float, p_s: float, ch: Subchannel) -> float:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return float(alpha * asymptotic_phi(ch.g2, ch.h2) * p_s)


def asymptotic_sum_rate(alphas, net: NetworkRealization) -> float:
    """``sum log2(alpha_i phi_i P_S)``; with ``P_S = P/(1 + tau)`` this is the
    log objective plus the constant ``N log2(P/(1 + tau))``."""
    phi = asymptotic_phi(net.g2, net.h2)
    return float(np.sum(np.log2(np.asarray(alphas) * phi * net.p_s)))


def _alphas(lam1, lam2, s):
    with np.errstate(divide="ignore"):
        return 1.0 / (lam1 + lam2 * s)


def _inner_lambda1(lam2, s, n):
    """Smallest ``lam1 >= 0`` with ``sum alpha <= 1`` for this ``lam2``."""
    if lam2 == 0:
        return float(n)
    if np.sum(_alphas(0.0, lam2, s)) <= 1.0:
        return 0.0
    # at lam1 = n the sum is at most 1
    return brentq(lambda l1: np.sum(_alphas(l1, lam2, s)) - 1.0, 0.0, float(n), xtol=_XTOL, rtol=_RTOL)


def solve_asymptotic(net: NetworkRealization, max_doublings: int = 200) -> AsymptoticSolution:
    """Multipliers of the high-SNR problem by nested root finding.

    For a given ``lam2`` the inner solve picks ``lam1`` so the source budget
    is tight (or ``lam1 = 0`` when it is slack); the outer solve moves
    ``lam2`` until the relay budget is tight, or keeps ``lam2 = 0`` when it
    is already met. Every alpha is strictly positive for nonzero gains, so
    no link ever has to be excluded.
    """
    r = np.sqrt(net.g2 / net.h2) if np.all(net.h2 > 0) else None
    if r is None or np.any(net.g2 <= 0):
        raise DegenerateChannelError("the asymptotic form needs nonzero gains")
    n = net.n
    s = r / net.tau

    def relay_excess(lam2):
        lam1 = _inner_lambda1(lam2, s, n)
        return np.sum(_alphas(lam1, lam2, s) * s) - 1.0

    if relay_excess(0.0) <= 0:
        lam2 = 0.0
    else:
        hi = float(n)
        for _ in range(max_doublings):
            if relay_excess(hi) <= 0:
                break
            hi *= 2.0
        else:
            raise AsymptoticConvergenceError("no bracket for the relay multiplier", None)
        lam2 = brentq(relay_excess, 0.0, hi, xtol=_XTOL, rtol=_RTOL)
    lam1 = _inner_lambda1(lam2, s, n)
    alphas = _alphas(lam1, lam2, s)
    betas = alphas * s
    phi = asymptotic_phi(net.g2, net.h2)
    return AsymptoticSolution(alphas, betas, float(lam1), float(lam2), phi)


def asymptotic_beta_closed_form(h_over_g, tau: float, lp1: float, lp2: float):
    """``max(0, 1 / (lp1 + lp2 tau |h|/|g|))``."""
    if lp1 < 0 or lp2 < 0 or (lp1 == 0 and lp2 == 0):
        raise ValueError("need lp1, lp2 >= 0, not both zero")
    hg = np.asarray(h_over_g, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.maximum(0.0, 1.0 / (lp1 + lp2 * tau * hg))
    return float(out) if out.ndim == 0 else out


def fit_beta_multipliers(sol: AsymptoticSolution, net: NetworkRealization) -> tuple[float, float]:
    """Least-squares ``(lp1, lp2)`` with ``1/beta_i = lp1 + lp2 tau |h_i|/|g_i|``.

    When all ratios coincide the system is rank one and the minimum-norm
    pair is returned.
    """
    hg = np.sqrt(net.h2 / net.g2)
    A = np.column_stack([np.ones(net.n), net.tau * hg])
    (lp1, lp2), *_ = np.linalg.lstsq(A, 1.0 / sol.betas, rcond=None)
    return float(lp1), float(lp2)


def check_inverse_waterfilling(sol: AsymptoticSolution, net: NetworkRealization) -> bool:
    """Among links with equal ``h2`` the weaker source hop gets more source
    power. Always true when the relay budget is slack (``lambda2 = 0``)."""
    if sol.lambda2 == 0:
        return True
    same_h = net.h2[:, None] == net.h2[None, :]
    weaker = net.g2[:, None] < net.g2[None, :]
    ok = sol.alphas[:, None] >= sol.alphas[None, :]
    return bool(np.all(ok | ~(same_h & weaker)))
