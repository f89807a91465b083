"""Joint source/relay power allocation with full CSI (Cases I and III).

Every relay fraction is tied to its source fraction by the balance relation
``alpha (alpha P_S g2 + 1) = tau beta (beta P_R h2 + 1)``, so the search runs
over the source fractions alone under the two budgets ``sum alpha <= 1`` and
``sum beta(alpha) <= 1``.

The per-link rate is *not* concave in alpha: it grows quadratically at small
powers and only becomes concave once the two hop SNRs are large enough. The
solver therefore works in two stages.

1. Dual decomposition over a fixed support. For multipliers ``(lam1, lam2)``
   every link in the support maximizes its own Lagrangian (table scan over
   all local maxima, then safeguarded Newton). Projected Newton on the convex
   dual drives the multipliers to complementary slackness. Links are then
   added or dropped by the sign of their Lagrangian and the dual is solved
   again. A support that passes the global check certifies the optimum.
2. When the support search cycles or stalls (a duality gap, typical at low
   SNR when a link sits near its inflection point) an SQP solve is run on the
   visited supports from a few starts, followed by a short add/drop search.
   The result is a KKT point but carries no certificate.

Internally a link is parametrised by its source-hop SNR ``x = alpha P_S g2``;
the relay-hop SNR ``y`` then solves ``y (y + 1) = (h2/g2) x (x + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channel import NetworkRealization, sort_for_asf
from .metrics import af_snr, link_capacity, theorem1_residual

__all__ = [
    "Allocation",
    "SolverConfig",
    "ConvergenceError",
    "solve_case1",
    "solve_case3",
    "verify_kkt",
    "allocation_from_alphas",
]

LN2 = np.log(2.0)
_TABLE_POINTS = 64
_TABLE_SPAN = 1e-9
_LOCAL_MOVES = 8
_BACKTRACKS = 8


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    tol
        Tolerance on the budget residuals at the dual solution and on the
        local solver's objective.
    max_iters
        Cap on dual Newton iterations and on local-solver iterations.
    max_support_moves
        Cap on add/drop rounds of the support search.
    """

    tol: float = 1e-8
    max_iters: int = 200
    max_support_moves: int = 60

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.max_support_moves < 0:
            raise ValueError("max_support_moves must be >= 0")


@dataclass(frozen=True, eq=False)
class Allocation:
    alphas: np.ndarray
    betas: np.ndarray
    per_link_rates: np.ndarray
    sum_rate: float
    multipliers: tuple[float, float] = (0.0, 0.0)
    certified: bool = False

    def __eq__(self, other: object) -> bool:
        # the certificate says how the point was found, not what it is
        if not isinstance(other, Allocation):
            return NotImplemented
        return (
            np.array_equal(self.alphas, other.alphas)
            and np.array_equal(self.betas, other.betas)
            and np.array_equal(self.per_link_rates, other.per_link_rates)
            and self.sum_rate == other.sum_rate
            and self.multipliers == other.multipliers
        )

    __hash__ = None  # type: ignore[assignment]


class ConvergenceError(RuntimeError):
    """Raised when no solver stage converged; ``best`` holds the best iterate."""

    def __init__(self, message: str, best: Allocation | None):
        super().__init__(message)
        self.best = best


def allocation_from_alphas(
    alphas, net: NetworkRealization, multipliers=(0.0, 0.0), certified=False
) -> Allocation:
    """Build an :class:`Allocation` with betas from the balance relation."""
    alphas = np.asarray(alphas, dtype=float).copy()
    alphas[(net.g2 == 0) | (net.h2 == 0)] = 0.0
    ok = alphas > 0
    betas = np.zeros_like(alphas)
    x = alphas[ok] * net.p_s * net.g2[ok]
    y = _relay_hop(x, net.h2[ok] / net.g2[ok])
    betas[ok] = y / (net.p_r * net.h2[ok])
    rho = af_snr(alphas * net.p_s, betas * net.p_r, net.g2, net.h2)
    rates = link_capacity(rho)
    return Allocation(
        alphas=alphas,
        betas=betas,
        per_link_rates=rates,
        sum_rate=float(rates.sum()),
        multipliers=(float(multipliers[0]), float(multipliers[1])),
        certified=certified,
    )


def verify_kkt(net: NetworkRealization, alloc: Allocation) -> np.ndarray:
    """Per-link residual of ``(beta/alpha) tau = (alpha P_S g2 + 1)/(beta P_R h2 + 1)``.

    Links with ``alpha = 0`` report 0.
    """
    return theorem1_residual(alloc.alphas, alloc.betas, net)


# ---------------------------------------------------------------------------
# per-link functions of the source-hop SNR x


def _relay_hop(x, k):
    q = k * x * (x + 1.0)
    return 2.0 * q / (1.0 + np.sqrt(1.0 + 4.0 * q))


def _link_terms(x, k, second=False):
    """Relay SNR y(x) and the rate F(x) = ln(1 + rho) with derivatives."""
    q = k * x * (x + 1.0)
    w = np.sqrt(1.0 + 4.0 * q)
    y = 2.0 * q / (1.0 + w)
    dy = k * (2.0 * x + 1.0) / w
    s = x + y + 1.0
    rho = x * y / s
    num = y * (y + 1.0) + x * (x + 1.0) * dy
    drho = num / s**2
    F = np.log1p(rho)
    dF = drho / (1.0 + rho)
    if not second:
        return y, dy, F, dF
    d2y = 2.0 * k * (1.0 - k) / w**3
    dnum = 2.0 * (x + y + 1.0) * dy + x * (x + 1.0) * d2y
    d2rho = dnum / s**2 - 2.0 * num * (1.0 + dy) / s**3
    d2F = d2rho / (1.0 + rho) - dF**2
    return y, dy, d2y, F, dF, d2F


class _Links:
    """Nondegenerate links of one realization with cached scan tables."""

    def __init__(self, g2: np.ndarray, h2: np.ndarray, p_s: float, p_r: float):
        self.k = h2 / g2
        self.a = 1.0 / (p_s * g2)  # alpha per unit of x
        self.c = 1.0 / (p_r * h2)  # beta per unit of y
        # largest x allowed on its own: alpha <= 1 and beta <= 1
        yb = p_r * h2
        qb = yb * (yb + 1.0) / self.k
        xb = 2.0 * qb / (1.0 + np.sqrt(1.0 + 4.0 * qb))
        self.xmax = np.minimum(p_s * g2, xb)
        self.m = g2.size
        span = np.logspace(np.log10(_TABLE_SPAN), 0.0, _TABLE_POINTS)
        self.xt = self.xmax[:, None] * span[None, :]
        kt = self.k[:, None]
        self.yt, self.dyt, Ft, dFt = _link_terms(self.xt, kt)
        self.Ft = Ft / LN2
        self.dFt = dFt / LN2

    # alpha, beta of an x vector
    def fractions(self, x):
        y = _relay_hop(x, self.k)
        return self.a * x, self.c * y

    def lagrangian(self, x, lam, rows=slice(None)):
        y, _, F, _ = _link_terms(x, self.k[rows])
        return F / LN2 - lam[0] * self.a[rows] * x - lam[1] * self.c[rows] * y

    def best_response(self, lam, support=None):
        """Maximiser of each link's Lagrangian over ``[0, xmax]``.

        Local maxima sit where the marginal ``phi`` crosses zero from above,
        or at the cap when ``phi`` is still nonnegative there. They are read
        off the table and the one with the largest Lagrangian is refined by
        Newton. When ``phi`` is negative over the whole table the link is
        *clamped*: its Lagrangian falls from 0 and it stays off.

        Without ``support`` links with a negative Lagrangian also switch off,
        giving the global best response. With a boolean ``support`` mask the
        links in it stay on whenever they are not clamped; the others are
        held at 0.

        Returns ``x``, the Lagrangian value there, ``dphi`` (slope of ``phi``
        at an interior root, 0 otherwise) and the clamped mask.
        """
        forced = support is not None
        rows = np.where(support)[0] if forced else np.arange(self.m)
        x = np.zeros(self.m)
        dphi = np.zeros(self.m)
        Lx = np.zeros(self.m)
        clamped = np.zeros(self.m, dtype=bool)
        if rows.size == 0:
            return x, Lx, dphi, clamped
        last = _TABLE_POINTS - 1
        xt = self.xt[rows]
        a = self.a[rows, None]
        c = self.c[rows, None]
        phi = self.dFt[rows] - lam[0] * a - lam[1] * c * self.dyt[rows]
        L = self.Ft[rows] - lam[0] * a * xt - lam[1] * c * self.yt[rows]
        cand = np.empty(phi.shape, dtype=bool)
        cand[:, :-1] = (phi[:, :-1] >= 0) & (phi[:, 1:] < 0)
        cand[:, last] = phi[:, last] >= 0
        score = np.where(cand, L, -np.inf)
        j = np.argmax(score, axis=1)
        low = ~cand.any(axis=1)
        clamped[rows[low]] = True
        at_cap = ~low & (j == last)
        x[rows[at_cap]] = self.xmax[rows[at_cap]]
        inner = ~low & ~at_cap
        if np.any(inner):
            sel = np.where(inner)[0]
            js = j[sel]
            xs, dp = self._refine(
                rows[sel], xt[sel, js], xt[sel, js + 1], phi[sel, js], phi[sel, js + 1], lam
            )
            x[rows[sel]] = xs
            dphi[rows[sel]] = dp
        on = x > 0
        Lx[on] = self.lagrangian(x[on], lam, on)
        if not forced:
            off = Lx < 0
            x[off] = 0.0
            dphi[off] = 0.0
            Lx[off] = 0.0
        return x, Lx, dphi, clamped

    def _refine(self, idx, lo, hi, pl, ph, lam):
        """Root of the falling marginal inside ``[lo, hi]`` (Newton with a
        bisection guard). ``pl`` and ``ph`` are the marginals at the ends."""
        k = self.k[idx]
        a = self.a[idx]
        c = self.c[idx]
        lo = lo.copy()
        hi = hi.copy()
        # start from the secant of phi across the bracket
        t = np.clip(pl / np.maximum(pl - ph, 1e-300), 0.0, 1.0)
        x = lo + t * (hi - lo)
        out_x = x.copy()
        out_dp = np.full(x.size, -1.0)
        sel = np.arange(x.size)
        for _ in range(60):
            _, dy, d2y, _, dF, d2F = _link_terms(x, k, second=True)
            phi = dF / LN2 - lam[0] * a - lam[1] * c * dy
            dphi = d2F / LN2 - lam[1] * c * d2y
            dp = dphi
            pos = phi > 0
            lo = np.where(pos, x, lo)
            hi = np.where(pos, hi, x)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = phi / dphi
            newton = x - step
            good = (dphi < 0) & (newton >= lo) & (newton <= hi)
            # quadratic convergence: a Newton step this small leaves an
            # error far below it
            done = (good & (np.abs(step) <= 1e-7 * x)) | (hi - lo <= 1e-12 * hi)
            x = np.where(good, newton, np.where(done, x, np.sqrt(lo * hi)))
            keep = ~done
            if not keep.any():
                break
            if not keep.all():
                out_x[sel[done]] = x[done]
                out_dp[sel[done]] = dp[done]
                sel, x, dp, lo, hi, k, a, c = (v[keep] for v in (sel, x, dp, lo, hi, k, a, c))
        out_x[sel] = x
        out_dp[sel] = dp
        return out_x, out_dp

    def cap_marginals(self, rows):
        """Marginal rate and relay-hop slope at the cap for the given links."""
        last = _TABLE_POINTS - 1
        return self.dFt[rows, last], self.dyt[rows, last]


def _initial_multipliers(links: _Links) -> np.ndarray:
    """Multipliers whose table-level best response roughly fills the budgets.

    The direction comes from a least-squares fit of the stationarity
    condition at an equal split; its scale is then bisected (in log space)
    until the coarse response spends about the whole of the tighter budget.
    """
    x = np.minimum(1.0 / (links.a * links.m), links.xmax)
    _, dy, _, dF = _link_terms(x, links.k)
    A = np.stack([links.a, links.c * dy], axis=1)
    lam, *_ = np.linalg.lstsq(A, dF / LN2, rcond=None)
    lam = np.maximum(lam, 0.0)
    if not np.any(lam > 0):
        lam = np.full(2, float(np.median(dF / LN2 / links.a)))

    def overspend(scale):
        l = lam * scale
        L = links.Ft - l[0] * links.a[:, None] * links.xt - l[1] * links.c[:, None] * links.yt
        j = np.argmax(L, axis=1)
        r = np.arange(links.m)
        xs = np.where(L[r, j] > 0, links.xt[r, j], 0.0)
        al, be = links.fractions(xs)
        return max(al.sum(), be.sum()) - 1.0

    lo, hi = -12.0, 12.0
    for _ in range(25):
        mid = 0.5 * (lo + hi)
        if overspend(2.0**mid) > 0:
            lo = mid
        else:
            hi = mid
    return lam * 2.0**hi


def _uncap_level(links: _Links, lam, x, support, j):
    """Smallest value of multiplier ``j`` at which some capped link leaves its cap."""
    capped = support & (x > 0) & (x >= links.xmax * (1 - 1e-12))
    if not np.any(capped):
        return None
    dF, dy = links.cap_marginals(capped)
    coef = (links.a[capped], links.c[capped] * dy)
    level = (dF - lam[1 - j] * coef[1 - j]) / coef[j]
    return float(np.min(level)) * (1.0 + 1e-12)


def _dual_solve(links: _Links, cfg: SolverConfig, lam, support):
    """Projected Newton on the dual of the problem restricted to ``support``.

    Returns ``(lam, x, status, clamped)`` with status ``"ok"`` (complementary
    slackness within tol) or ``"stall"``; ``clamped`` flags support links
    that are off at ``lam`` because their Lagrangian is negative everywhere.
    """
    lam = np.asarray(lam, dtype=float).copy()

    def evaluate(l):
        x, Lx, dphi, clamped = links.best_response(l, support)
        al, be = links.fractions(x)
        q = Lx.sum() + l[0] + l[1]
        g = np.array([1.0 - al.sum(), 1.0 - be.sum()])
        return x, dphi, clamped, q, g

    x, dphi, clamped, q, g = evaluate(lam)
    for _ in range(cfg.max_iters):
        kkt = np.where(lam > 0, np.abs(g), np.maximum(-g, 0.0))
        if np.all(kkt <= cfg.tol):
            return lam, x, "ok", clamped
        free = (lam > 0) | (g < 0)
        # dual Hessian by implicit differentiation of the stationary links
        st = dphi < 0
        _, dy, _, _ = _link_terms(x[st], links.k[st])
        u = links.a[st]
        v = links.c[st] * dy
        w = -1.0 / dphi[st]
        H = np.array([[np.sum(w * u * u), np.sum(w * u * v)], [np.sum(w * u * v), np.sum(w * v * v)]])
        diag = np.diag(H)
        flat = free & (diag <= 1e-12 * max(1.0, float(diag.max())))
        if np.any(flat):
            # no stationary link reacts to these multipliers: a slack budget
            # drops its price to 0, an overspent one is priced up until a
            # capped link comes off its cap
            trial = lam.copy()
            slack = flat & (g > 0)
            if np.any(slack):
                trial[slack] = 0.0
            else:
                j = int(np.argmin(np.where(flat, g, np.inf)))
                level = _uncap_level(links, lam, x, support, j)
                if level is None or level <= lam[j]:
                    return lam, x, "stall", clamped
                trial[j] = level
            lam = trial
            x, dphi, clamped, q, g = evaluate(lam)
            continue
        d = np.zeros(2)
        Hf = H[np.ix_(free, free)]
        ev, V = np.linalg.eigh(Hf)
        curved = ev > 1e-10 * ev.max()
        gf = g[free]
        df = -V[:, curved] @ ((V[:, curved].T @ gf) / ev[curved])
        lf = lam[free]
        for nvec in V[:, ~curved].T:
            # the dual is linear along nvec: walk downhill to the nearest bound
            slope = float(gf @ nvec)
            if abs(slope) <= cfg.tol:
                continue
            nvec = -np.sign(slope) * nvec
            shrink = nvec < 0
            reach = np.min(lf[shrink] / -nvec[shrink]) if np.any(shrink) else max(1.0, lf.max())
            df = df + reach * nvec
        d[free] = df
        step = 1.0
        accepted = False
        for _ in range(_BACKTRACKS):
            trial = np.maximum(lam + step * d, 0.0)
            xt, dpt, ct, qt, gt = evaluate(trial)
            if qt <= q + 1e-4 * float(g @ (trial - lam)) + 1e-14 * (1.0 + abs(q)):
                accepted = True
                break
            step *= 0.5
        if not accepted or np.array_equal(trial, lam):
            return lam, x, "stall", clamped
        lam, x, dphi, clamped, q, g = trial, xt, dpt, ct, qt, gt
    return lam, x, "stall", clamped


def _raise_cap_multiplier(links: _Links, lam, x, support, tol):
    """Pick the largest valid multiplier when every on link sits at its cap.

    Capped links only need a nonnegative marginal, so the multiplier of the
    tight budget is not unique. The largest one prices the other links out
    most strongly and is the one that can certify the support.
    """
    on = support & (x > 0)
    if not np.any(on) or not np.all(x[on] >= links.xmax[on] * (1 - 1e-12)):
        return lam
    al, be = links.fractions(x)
    dF, dym = links.cap_marginals(on)
    u = links.a[on]
    v = links.c[on] * dym
    # the capped links must also keep a nonnegative Lagrangian
    xm = links.xmax[on]
    ym, _, F, _ = _link_terms(xm, links.k[on])
    F = F / LN2
    uf = u * xm
    vf = links.c[on] * ym
    lam = lam.copy()
    if 1.0 - al.sum() <= tol:
        top = min(np.min((dF - lam[1] * v) / u), np.min((F - lam[1] * vf) / uf))
        lam[0] = max(lam[0], float(top))
    elif 1.0 - be.sum() <= tol:
        top = min(np.min((dF - lam[0] * u) / v), np.min((F - lam[0] * uf) / vf))
        lam[1] = max(lam[1], float(top))
    return lam


def _dual_support_search(links: _Links, cfg: SolverConfig):
    """Add/drop loop around the fixed-support dual.

    Starting from the links that the coarse global response at the initial
    multipliers keeps on, the dual is solved with the support fixed.
    Links with a negative Lagrangian at the converged multipliers are then
    dropped; otherwise the off link with the best positive Lagrangian is
    added. A support that no link wants to leave or join is a global optimum
    (zero duality gap). Returning to a support already visited means a link
    sits on the duality gap; the best point seen is then kept.

    Returns ``(alphas, lam, status, region)`` with status ``"certified"``,
    ``"cycle"`` or ``"stall"``; ``region`` is the union of the supports
    visited, where a local polish should look.
    """
    lam = _initial_multipliers(links)
    # start from the links the coarse global response keeps on
    L = links.Ft - lam[0] * links.a[:, None] * links.xt - lam[1] * links.c[:, None] * links.yt
    support = L.max(axis=1) > 0
    if not support.any():
        support = np.ones(links.m, dtype=bool)
    seen = set()
    best = (None, lam, -np.inf)
    status = "stall"
    region = np.zeros(links.m, dtype=bool)
    for _ in range(cfg.max_support_moves):
        lam, x, status, clamped = _dual_solve(links, cfg, lam, support)
        support = support & ~clamped
        if not support.any():
            # every link clamped off; leave it to the primal polish
            status = "stall"
            break
        alphas = _make_feasible(links.a * x, links)
        val = _objective(alphas, links)
        if val > best[2]:
            best = (alphas, lam, val)
        key = support.tobytes()
        if key in seen:
            status = "cycle"
            break
        seen.add(key)
        region = region | support
        eps = 1e-12 * (1.0 + abs(val))
        Lon = np.full(links.m, np.inf)
        Lon[support] = links.lagrangian(x[support], lam, support)
        drop = Lon < -eps
        if status != "ok":
            # a stall sits on a kink where some link switches; those with a
            # negative Lagrangian are the ones to let go
            if not drop.any() or not np.any(support & ~drop):
                break
            support = support & ~drop
            continue
        lam = _raise_cap_multiplier(links, lam, x, support, cfg.tol)
        Lon[support] = links.lagrangian(x[support], lam, support)
        drop = Lon < -eps
        _, Lg, _, _ = links.best_response(lam)
        gain = np.where(support, -np.inf, Lg)
        if not drop.any() and not np.any(gain > eps):
            return alphas, lam, "certified", support
        if drop.any() and not np.any(support & ~drop):
            drop = Lon < Lon.max()
        if drop.any():
            support = support & ~drop
        else:
            support = support | (gain >= gain.max())
    else:
        status = "stall"
    return best[0], best[1], status, region


# ---------------------------------------------------------------------------
# fallback: local SQP plus support search


def _local_solve(net_g2, net_h2, p_s, p_r, a0, support, cfg):
    idx = np.where(support)[0]
    if idx.size == 0:
        return np.zeros(net_g2.size), True
    g2, h2 = net_g2[idx], net_h2[idx]
    k = h2 / g2
    a_of_x = p_s * g2
    c = 1.0 / (p_r * h2)

    def parts(z):
        x = z * a_of_x
        y, dy, F, dF = _link_terms(x, k)
        return F.sum() / LN2, dF * a_of_x / LN2, (c * y).sum(), c * dy * a_of_x

    def obj(z):
        f, df, _, _ = parts(z)
        return -f, -df

    cons = [
        {"type": "ineq", "fun": lambda z: 1.0 - z.sum(), "jac": lambda z: -np.ones_like(z)},
        {"type": "ineq", "fun": lambda z: 1.0 - parts(z)[2], "jac": lambda z: -parts(z)[3]},
    ]
    res = minimize(
        obj,
        np.clip(a0[idx], 0.0, 1.0),
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * idx.size,
        constraints=cons,
        options={"ftol": min(cfg.tol, 1e-10), "maxiter": cfg.max_iters},
    )
    alphas = np.zeros(net_g2.size)
    alphas[idx] = np.clip(res.x, 0.0, 1.0)
    return alphas, res.status != 9


def _estimate_multipliers(alphas, links: _Links, tol=1e-7) -> np.ndarray:
    x = alphas / links.a
    _, dy, _, dF = _link_terms(x, links.k)
    al, be = links.fractions(x)
    on = alphas > 0
    cols = []
    if al.sum() > 1 - tol:
        cols.append(0)
    if be.sum() > 1 - tol:
        cols.append(1)
    lam = np.zeros(2)
    if not cols or not np.any(on):
        return lam
    A = np.stack([links.a[on], links.c[on] * dy[on]], axis=1)[:, cols]
    sol, *_ = np.linalg.lstsq(A, dF[on] / LN2, rcond=None)
    lam[cols] = np.maximum(sol, 0.0)
    return lam


def _make_feasible(alphas, links: _Links) -> np.ndarray:
    alphas = np.clip(alphas, 0.0, links.a * links.xmax)
    s = alphas.sum()
    if s > 1.0:
        alphas = alphas / s
    _, be = links.fractions(alphas / links.a)
    if be.sum() > 1.0:
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if links.fractions(mid * alphas / links.a)[1].sum() <= 1.0:
                lo = mid
            else:
                hi = mid
        alphas = lo * alphas
    while alphas.sum() > 1.0:
        alphas = alphas * (1.0 - 1e-15)
    return alphas


def _objective(alphas, links: _Links) -> float:
    x = alphas / links.a
    _, _, F, _ = _link_terms(x, links.k)
    return float(F.sum() / LN2)


def _support_search(links: _Links, g2, h2, p_s, p_r, starts, cfg):
    best = None
    best_val = -np.inf
    any_converged = False
    for a0, support in starts:
        al, conv = _local_solve(g2, h2, p_s, p_r, a0, support, cfg)
        any_converged |= conv
        al = _make_feasible(al, links)
        v = _objective(al, links)
        if v > best_val:
            best, best_val = al, v
    for _ in range(_LOCAL_MOVES):
        lam = _estimate_multipliers(best, links)
        on = best > 0
        x = best / links.a
        Lon = links.lagrangian(x, lam)
        xg, Lg, _, _ = links.best_response(lam)
        gain = np.where(on, -np.inf, Lg)
        moves = []
        for i in np.argsort(-gain)[:2]:
            if gain[i] > 1e-12:
                a0 = best.copy()
                a0[i] = links.a[i] * xg[i]
                sup = on.copy()
                sup[i] = True
                moves.append((a0, sup))
        for i in np.argsort(np.where(on, Lon, np.inf))[:2]:
            if on[i] and on.sum() > 1 and Lon[i] < 0:
                a0 = best.copy()
                a0[i] = 0.0
                sup = on.copy()
                sup[i] = False
                moves.append((a0, sup))
        improved = False
        for a0, sup in moves:
            al, conv = _local_solve(g2, h2, p_s, p_r, a0, sup, cfg)
            any_converged |= conv
            al = _make_feasible(al, links)
            v = _objective(al, links)
            if v > best_val + 1e-12:
                best, best_val, improved = al, v, True
        if not improved:
            break
    return best, any_converged


# ---------------------------------------------------------------------------


def _final(alphas, net, lam, certified) -> Allocation:
    # the sums may land an ulp above 1; shave the alphas until both fit
    alloc = allocation_from_alphas(alphas, net, multipliers=lam, certified=certified)
    while alloc.alphas.sum() > 1.0 or alloc.betas.sum() > 1.0:
        alphas = alphas * (1.0 - 4e-16)
        alloc = allocation_from_alphas(alphas, net, multipliers=lam, certified=certified)
    return alloc


def solve_case1(net: NetworkRealization, cfg: SolverConfig | None = None) -> Allocation:
    """Maximise the sum rate with full CSI at source and relay.

    Links with a zero gain on either hop get ``alpha = beta = 0``. The
    returned allocation has ``certified=True`` when the dual stage closed the
    duality gap.
    """
    cfg = cfg or SolverConfig()
    n = net.n
    usable = (net.g2 > 0) & (net.h2 > 0)
    alphas = np.zeros(n)
    if not np.any(usable):
        return allocation_from_alphas(alphas, net, certified=True)
    g2, h2 = net.g2[usable], net.h2[usable]
    links = _Links(g2, h2, net.p_s, net.p_r)

    if links.m == 1:
        alphas[usable] = min(1.0, float(links.a[0] * links.xmax[0]))
        return _final(alphas, net, (0.0, 0.0), True)

    sub, lam, status, region = _dual_support_search(links, cfg)
    if status == "certified":
        alphas[usable] = sub
        return _final(alphas, net, lam, True)

    # A link that keeps flipping on and off sits on the duality gap; the
    # optimum may then be pinned by the two budgets rather than by any
    # multiplier pair, which only a primal solve can reach.
    starts = []
    if sub is not None and np.any(region | (sub > 0)):
        starts.append((sub, region | (sub > 0)))
    if status == "stall" or sub is None:
        starts.append((np.full(links.m, 1.0 / links.m), np.ones(links.m, dtype=bool)))
    cap = np.minimum(1.0, links.a * links.xmax)
    cap_rate = _link_terms(cap / links.a, links.k)[2] / LN2
    j = int(np.argmax(cap_rate))
    single = np.zeros(links.m)
    single[j] = cap[j]
    starts.append((single, single > 0))

    sub, converged = _support_search(links, g2, h2, net.p_s, net.p_r, starts, cfg)
    alphas[usable] = sub
    lam = _estimate_multipliers(sub, links)
    alloc = _final(alphas, net, lam, False)
    if not converged:
        raise ConvergenceError("local solver hit max_iters from every start", alloc)
    return alloc


def solve_case3(net: NetworkRealization, cfg: SolverConfig | None = None) -> Allocation:
    """Case I on the sorted pairing; the result is indexed over sorted pairs."""
    return solve_case1(sort_for_asf(net), cfg)
