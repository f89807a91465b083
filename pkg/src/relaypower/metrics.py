"""Closed-form SNR and capacity expressions for the two-hop AF link.

Noise power is 1 on every hop, rates are in bits per channel use and no
half-duplex 1/2 factor is applied. Functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import NetworkRealization, Subchannel

__all__ = [
    "DegenerateChannelError",
    "LinkPowers",
    "af_snr",
    "af_link_snr",
    "link_capacity",
    "a_function",
    "relay_snr_from_alpha",
    "beta_from_alpha",
    "betas_from_alphas",
    "theorem1_residual",
    "sum_capacity",
    "sum_capacity_alpha",
    "sum_capacity_alpha_grad",
    "relay_side_capacity",
]


class DegenerateChannelError(ValueError):
    """A zero gain makes the requested quantity undefined."""


@dataclass(frozen=True)
class LinkPowers:
    ps_i: float
    pr_i: float

    def __post_init__(self) -> None:
        for name in ("ps_i", "pr_i"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


def af_snr(ps, pr, g2, h2):
    """End-to-end SNR ``ps g2 pr h2 / (ps g2 + pr h2 + 1)`` (array version)."""
    x = np.asarray(ps, dtype=float) * g2
    y = np.asarray(pr, dtype=float) * h2
    return x * y / (x + y + 1.0)


def af_link_snr(p: LinkPowers, ch: Subchannel) -> float:
    return float(af_snr(p.ps_i, p.pr_i, ch.g2, ch.h2))


def link_capacity(rho):
    """``log2(1 + rho)``."""
    return np.log1p(rho) / np.log(2.0)


def a_function(alpha, p_s: float, ch: Subchannel):
    """``sqrt(1 + 4 alpha P_S h2 (alpha P_S g2 + 1))``; equals 1 at alpha = 0."""
    alpha = np.asarray(alpha, dtype=float)
    x = alpha * p_s * ch.g2
    return np.sqrt(1.0 + 4.0 * alpha * p_s * ch.h2 * (x + 1.0))


def relay_snr_from_alpha(alpha, p_s: float, g2, h2):
    """Relay-hop SNR ``beta P_R h2 = (A(alpha) - 1) / 2`` on the symmetric pairing.

    Written as ``2 q / (A + 1)`` with ``q = alpha P_S h2 (x + 1)`` so small
    ``alpha`` does not cancel.
    """
    alpha = np.asarray(alpha, dtype=float)
    x = alpha * p_s * g2
    q = alpha * p_s * h2 * (x + 1.0)
    a = np.sqrt(1.0 + 4.0 * q)
    return 2.0 * q / (a + 1.0)


def betas_from_alphas(alphas, net: NetworkRealization) -> np.ndarray:
    """Vector form of :func:`beta_from_alpha` (zero-gain links with alpha = 0
    get beta = 0)."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any((alphas > 0) & (net.h2 == 0)):
        raise DegenerateChannelError("alpha > 0 on a link with h2 = 0")
    y = relay_snr_from_alpha(alphas, net.p_s, net.g2, net.h2)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(y > 0, y / (net.p_r * net.h2), 0.0)
    return beta


def beta_from_alpha(alpha: float, net: NetworkRealization, i: int) -> float:
    """Relay fraction that satisfies the source/relay balance for link ``i``.

    ``beta_i = (A(alpha_i) - 1) / (2 P_R h2_i)``, the positive root of
    ``alpha (alpha P_S g2 + 1) = tau beta (beta P_R h2 + 1)``.
    """
    if alpha < 0 or alpha > 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    if alpha == 0:
        return 0.0
    h2 = net.h2[i]
    if h2 == 0:
        raise DegenerateChannelError(f"link {i} has h2 = 0; no finite beta balances alpha > 0")
    y = relay_snr_from_alpha(alpha, net.p_s, net.g2[i], h2)
    return float(y / (net.p_r * h2))


def theorem1_residual(alphas, betas, net: NetworkRealization) -> np.ndarray:
    """``|(beta/alpha) tau - (alpha P_S g2 + 1)/(beta P_R h2 + 1)|`` per link,
    zero where alpha = 0."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    on = a > 0
    res = np.zeros_like(a)
    lhs = b[on] / a[on] * net.tau
    rhs = (a[on] * net.p_s * net.g2[on] + 1.0) / (b[on] * net.p_r * net.h2[on] + 1.0)
    res[on] = np.abs(lhs - rhs)
    return res


def sum_capacity(alphas, betas, net: NetworkRealization) -> float:
    """Sum of ``log2(1 + rho_i)`` for explicit source and relay fractions."""
    rho = af_snr(np.asarray(alphas) * net.p_s, np.asarray(betas) * net.p_r, net.g2, net.h2)
    return float(np.sum(link_capacity(rho)))


def _alpha_rates(alphas, p_s, g2, h2):
    x = np.asarray(alphas, dtype=float) * p_s * g2
    y = relay_snr_from_alpha(alphas, p_s, g2, h2)
    return x, y, x * y / (x + y + 1.0)


def sum_capacity_alpha(alphas, net: NetworkRealization) -> float:
    """Sum capacity once every relay fraction follows from its source fraction.

    Each term is ``log2(1 + x (A - 1)/2 / (x + (A + 1)/2))`` with
    ``x = alpha_i P_S g2_i``; ``P_R`` drops out.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != net.g2.shape:
        raise ValueError("need one alpha per subchannel")
    _, _, rho = _alpha_rates(alphas, net.p_s, net.g2, net.h2)
    return float(np.sum(link_capacity(rho)))


def sum_capacity_alpha_grad(alphas, net: NetworkRealization) -> np.ndarray:
    """Analytic gradient of :func:`sum_capacity_alpha` with respect to alpha."""
    alphas = np.asarray(alphas, dtype=float)
    p, g2, h2 = net.p_s, net.g2, net.h2
    x, y, rho = _alpha_rates(alphas, p, g2, h2)
    a = 2.0 * y + 1.0
    dy = p * h2 * (2.0 * x + 1.0) / a
    d = x + y + 1.0
    drho = (y * (y + 1.0) * p * g2 + x * (x + 1.0) * dy) / d**2
    return drho / ((1.0 + rho) * np.log(2.0))


def relay_side_capacity(rho_sr, beta, p_r: float, h2):
    """Rate of a link whose source hop SNR is fixed at ``rho_sr`` when the
    relay spends ``beta P_R`` on it."""
    y = np.asarray(beta, dtype=float) * p_r * h2
    rho_sr = np.asarray(rho_sr, dtype=float)
    return link_capacity(rho_sr * y / (rho_sr + y + 1.0))
