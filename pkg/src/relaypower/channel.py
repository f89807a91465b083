"""Subchannel gains, Rayleigh sampling and the sorted (ASF) pairing.

Gains are kept as squared magnitudes; phases never enter a capacity
expression so they are not generated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Subchannel",
    "ChannelStats",
    "NetworkRealization",
    "sample_network",
    "sort_for_asf",
]


@dataclass(frozen=True)
class Subchannel:
    """One source-relay / relay-destination gain pair (squared magnitudes)."""

    g2: float
    h2: float

    def __post_init__(self) -> None:
        for name in ("g2", "h2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class ChannelStats:
    """Fading variances; scalars are shared by all ``n`` subchannels."""

    sigma_g2: float | Sequence[float]
    sigma_h2: float | Sequence[float]
    n: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        for name in ("sigma_g2", "sigma_h2"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim > 1 or (v.ndim == 1 and v.size != self.n):
                raise ValueError(f"{name} must be a scalar or have length n")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValueError(f"{name} must be > 0")

    def variances(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-subchannel variances broadcast to length ``n``."""
        sg = np.broadcast_to(np.asarray(self.sigma_g2, dtype=float), (self.n,))
        sh = np.broadcast_to(np.asarray(self.sigma_h2, dtype=float), (self.n,))
        return sg.copy(), sh.copy()


@dataclass(frozen=True, eq=False)
class NetworkRealization:
    """All ``n`` subchannels of one fading realization plus the power budgets.

    The gains are held as two float arrays; :attr:`channels` gives the
    per-subchannel view.
    """

    g2: np.ndarray
    h2: np.ndarray
    p_s: float
    p_r: float

    def __post_init__(self) -> None:
        g2 = np.array(self.g2, dtype=float, ndmin=1)
        h2 = np.array(self.h2, dtype=float, ndmin=1)
        if g2.ndim != 1 or g2.shape != h2.shape:
            raise ValueError("g2 and h2 must be 1-D arrays of equal length")
        if g2.size == 0:
            raise ValueError("a realization needs at least one subchannel")
        if not (np.all(np.isfinite(g2)) and np.all(np.isfinite(h2))):
            raise ValueError("gains must be finite")
        if np.any(g2 < 0) or np.any(h2 < 0):
            raise ValueError("gains must be >= 0")
        if not (self.p_s > 0 and self.p_r > 0):
            raise ValueError("power budgets must be > 0")
        g2.flags.writeable = False
        h2.flags.writeable = False
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "p_s", float(self.p_s))
        object.__setattr__(self, "p_r", float(self.p_r))

    @classmethod
    def from_channels(
        cls, channels: Iterable[Subchannel], p_s: float, p_r: float
    ) -> "NetworkRealization":
        chans = list(channels)
        return cls(
            np.array([c.g2 for c in chans], dtype=float),
            np.array([c.h2 for c in chans], dtype=float),
            p_s,
            p_r,
        )

    @property
    def n(self) -> int:
        return int(self.g2.size)

    @property
    def tau(self) -> float:
        """Relay-to-source budget ratio ``P_R / P_S``."""
        return self.p_r / self.p_s

    @property
    def channels(self) -> list[Subchannel]:
        return [Subchannel(float(g), float(h)) for g, h in zip(self.g2, self.h2)]

    def with_budgets(self, p_s: float, p_r: float) -> "NetworkRealization":
        return NetworkRealization(self.g2, self.h2, p_s, p_r)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NetworkRealization):
            return NotImplemented
        return (
            self.p_s == other.p_s
            and self.p_r == other.p_r
            and np.array_equal(self.g2, other.g2)
            and np.array_equal(self.h2, other.h2)
        )

    __hash__ = None  # type: ignore[assignment]


def sample_gains(
    stats: ChannelStats, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``|g|^2`` then ``|h|^2``; both exponential with the given means."""
    sg, sh = stats.variances()
    g2 = rng.exponential(1.0, stats.n) * sg
    h2 = rng.exponential(1.0, stats.n) * sh
    return g2, h2


def sample_network(
    stats: ChannelStats, p_s: float, p_r: float, seed: int | np.random.SeedSequence
) -> NetworkRealization:
    """Sample one Rayleigh realization.

    ``|g_i|^2`` and ``|h_i|^2`` are the squared magnitudes of zero-mean
    circular complex Gaussians, i.e. exponential with means ``sigma_g2`` and
    ``sigma_h2``. The same seed always gives the same realization.
    """
    rng = np.random.default_rng(seed)
    g2, h2 = sample_gains(stats, rng)
    return NetworkRealization(g2, h2, p_s, p_r)


def sort_for_asf(net: NetworkRealization) -> NetworkRealization:
    """Pair the i-th strongest source-relay gain with the i-th strongest
    relay-destination gain.

    Both lists are sorted independently in decreasing order; ties keep their
    original order (stable sort).
    """
    g_order = np.argsort(-net.g2, kind="stable")
    h_order = np.argsort(-net.h2, kind="stable")
    return NetworkRealization(net.g2[g_order], net.h2[h_order], net.p_s, net.p_r)
