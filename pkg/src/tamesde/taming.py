"""Monotonicity-preserving tamed drift and checks of its guaranteed properties.

For a problem with monotonicity constant ``L`` write ``f(x) = b(0) - L x - b(x)``
(a monotone map with ``f(0) = 0``).  The taming radius ``s_n`` is the first
radius at which ``|f|`` reaches ``n**alpha``.  The tamed drift

    b_n(x) = b(0) - L x - t_n(x) f(x) - n**alpha r_n(x) x

agrees with ``b`` on the ball of radius ``s_n - 2``, is the linear pull
``b(0) - (L + n**alpha) x`` outside radius ``s_n``, and blends the two across
the annuli in between with piecewise-linear radial ramps.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import SdeProblem

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5
DEFAULT_SEARCH_CAP = 1e6
BISECTION_TOL = 1e-10


class SchemeUndefinedError(ValueError):
    """The taming radius is not above 2, so the tamed drift is not defined."""


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2], got {alpha}")


def f_eval(problem: SdeProblem, x) -> np.ndarray:
    """Nonlinear remainder ``b(0) - L x - b(x)``; vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    return problem.drift_at_origin - problem.monotonicity_const * x - problem.drift(x)


def state_norm(x) -> np.ndarray:
    """Euclidean norm over the last axis; plain ``abs`` in one dimension."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 1:
        return np.abs(x[..., 0])
    return np.linalg.norm(x, axis=-1)


def unit_directions(dim: int, count: Optional[int] = None) -> np.ndarray:
    """Quasi-uniform unit vectors in ``R^dim``.

    ``dim == 1`` gives exactly ``[[1], [-1]]``.  Otherwise the directions are
    the signed coordinate axes followed by a scrambled Sobol point set pushed
    through the normal inverse CDF and normalised, so the set is deterministic.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    from scipy.stats import norm, qmc

    count = 64 * dim if count is None else count
    axes = np.concatenate([np.eye(dim), -np.eye(dim)])
    extra = max(count - len(axes), 0)
    if extra == 0:
        return axes[:count]
    u = qmc.Sobol(dim, scramble=True, seed=12345).random_base2(math.ceil(math.log2(extra)))[:extra]
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.concatenate([axes, z])


def radial_max(problem: SdeProblem, radii, directions: np.ndarray) -> np.ndarray:
    """``max_u |f(r u)|`` for each radius over the sampled directions."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    pts = radii[:, None, None] * directions[None, :, :]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = state_norm(f_eval(problem, pts))
    vals = np.where(np.isnan(vals), np.inf, vals)
    return vals.max(axis=1)


def locate_s_n(
    problem: SdeProblem,
    n: int,
    alpha: float = DEFAULT_ALPHA,
    search_cap: float = DEFAULT_SEARCH_CAP,
    n_directions: Optional[int] = None,
) -> float:
    """Taming radius: first ``r`` with ``max_{|x|=r} |f(x)| >= n**alpha``.

    A scan over log-spaced radii brackets the first crossing, then bisection
    narrows it.  The returned value is the lower end of the final bracket, so it
    never exceeds the crossing found.  Returns ``inf`` if ``|f|`` stays below
    the level up to ``search_cap``.

    Raises SchemeUndefinedError when the radius is not above 2.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    _check_alpha(alpha)
    if not search_cap > 2:
        raise ValueError(f"search_cap must exceed 2, got {search_cap}")
    level = float(n) ** alpha
    dirs = unit_directions(problem.state_dim, n_directions)

    grid = np.concatenate([[0.0], np.geomspace(1e-3, search_cap, 2048)])
    above = radial_max(problem, grid, dirs) >= level
    if not above.any():
        log.info("|f| stays below n^alpha=%g up to radius %g; drift left untamed", level, search_cap)
        return math.inf
    k = int(np.argmax(above))
    if k == 0:
        raise SchemeUndefinedError("|f(0)| >= n^alpha; the tamed drift is undefined")
    lo, hi = grid[k - 1], grid[k]
    while hi - lo > BISECTION_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if radial_max(problem, mid, dirs)[0] >= level:
            hi = mid
        else:
            lo = mid
    if lo <= 2:
        raise SchemeUndefinedError(
            f"taming radius {lo:.6g} <= 2 for n={n}, alpha={alpha}; increase n"
        )
    return float(lo)


def ramp_t(x, s_n: float) -> np.ndarray:
    """Weight on ``f``: 1 inside ``s_n - 1``, 0 outside ``s_n``, linear between."""
    norm = state_norm(x)
    if math.isinf(s_n):
        return np.ones_like(norm)
    return np.clip(s_n - norm, 0.0, 1.0)


def ramp_r(x, s_n: float) -> np.ndarray:
    """Weight on the linear pull: 0 inside ``s_n - 2``, 1 outside ``s_n - 1``."""
    norm = state_norm(x)
    if math.isinf(s_n):
        return np.zeros_like(norm)
    return np.clip(norm - s_n + 2.0, 0.0, 1.0)


@dataclass(frozen=True)
class TamedDrift:
    """The tamed drift ``b_n`` for one grid parameter ``n``.

    Construct with :meth:`build`, which locates ``s_n`` once.  ``s_n`` may be
    ``inf``, in which case the drift is left untamed and :meth:`__call__`
    evaluates ``b`` itself.
    """

    base: SdeProblem
    n: int
    alpha: float
    s_n: float
    search_cap: float = DEFAULT_SEARCH_CAP
    _level: float = field(init=False, repr=False)

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not self.s_n > 2:
            raise SchemeUndefinedError(f"taming radius {self.s_n} must exceed 2")
        object.__setattr__(self, "_level", float(self.n) ** self.alpha)

    @classmethod
    def build(
        cls,
        problem: SdeProblem,
        n: int,
        alpha: float = DEFAULT_ALPHA,
        search_cap: float = DEFAULT_SEARCH_CAP,
        n_directions: Optional[int] = None,
    ) -> "TamedDrift":
        s_n = locate_s_n(problem, n, alpha, search_cap, n_directions)
        return cls(problem, n, alpha, s_n, search_cap)

    @property
    def untamed(self) -> bool:
        return math.isinf(self.s_n)

    @property
    def level(self) -> float:
        """``n**alpha``."""
        return self._level

    def ramps(self, x) -> tuple[np.ndarray, np.ndarray]:
        return ramp_t(x, self.s_n), ramp_r(x, self.s_n)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.untamed:
            return self.base.drift(x)
        shape = x.shape
        x = x.reshape(-1, self.base.state_dim)
        L = self.base.monotonicity_const
        t, r = self.ramps(x)
        # Rearranged as t*b + (1-t)*(b(0) - L x) - n^a r x so that the inner
        # ball returns b(x) bit for bit, and b is only evaluated where t > 0.
        linear = self.base.drift_at_origin - L * x
        out = linear - self._level * r[..., None] * x
        inside = t > 0
        if np.any(inside):
            xi = x[inside]
            ti = t[inside][:, None]
            ri = r[inside][:, None]
            bx = self.base.drift(xi)
            out[inside] = ti * bx + (1.0 - ti) * linear[inside] - self._level * ri * xi
        return out.reshape(shape)


def bn_eval(td: TamedDrift, x) -> np.ndarray:
    return td(x)


def classical_tamed_eval(problem: SdeProblem, n: int, alpha: float, x) -> np.ndarray:
    """Standard taming ``b / (1 + n**-alpha |b|)``; bounded by ``n**alpha``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        b = problem.drift(x)
        size = np.linalg.norm(b, axis=-1, keepdims=True)
        out = b / (1.0 + size * float(n) ** (-alpha))
    # |b| = inf: the limit is n^alpha along the direction of b
    bad = ~np.isfinite(out).all(axis=-1)
    if np.any(bad):
        direction = np.sign(np.where(np.isfinite(b[bad]), 0.0, b[bad]))
        direction /= np.maximum(np.linalg.norm(direction, axis=-1, keepdims=True), 1.0)
        out[bad] = float(n) ** alpha * direction
    return out


# ---------------------------------------------------------------- verifiers

REGIONS = ("inner", "annulus_r", "annulus_t", "outer")


@dataclass
class RegionRow:
    region: str
    pairs: int
    max_violation: float
    max_normalised: float
    passed: bool


@dataclass
class VerifyReport:
    """Outcome of a sampling check; rows serialise to CSV."""

    check: str
    n: int
    alpha: float
    s_n: float
    tolerance: float
    rows: list[RegionRow]
    flagged: bool = False
    note: str = ""

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_normalised(self) -> float:
        return max(r.max_normalised for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", "pairs", "max_violation", "pass"])
        for r in self.rows:
            w.writerow([r.region, r.pairs, repr(float(r.max_violation)), str(r.passed).lower()])
        if self.note:
            buf.write(f"# {self.note}\n")
        return buf.getvalue()


def _region_bounds(s_n: float, radius: float) -> dict[str, tuple[float, float]]:
    if math.isinf(s_n):
        return {"inner": (0.0, radius)}
    return {
        "inner": (0.0, max(s_n - 2.0, 0.0)),
        "annulus_r": (s_n - 2.0, s_n - 1.0),
        "annulus_t": (s_n - 1.0, s_n),
        "outer": (s_n, max(radius, s_n + 1.0)),
    }


def _sample_shell(rng: np.random.Generator, count: int, dim: int, lo: float, hi: float) -> np.ndarray:
    """Points with norm uniform in ``[lo, hi]`` and uniformly random direction."""
    z = rng.standard_normal((count, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    radius = rng.uniform(lo, hi, size=count)
    return z * radius[:, None]


def verify_monotonicity(
    td: TamedDrift,
    pairs: int = 100_000,
    radius: Optional[float] = None,
    seed=0,
    tol_rel: float = 1e-9,
) -> VerifyReport:
    """Sample point pairs region by region and check strong monotonicity.

    Pairs are drawn for every (unordered) combination of the four regions, so
    cross-region pairs are included.  Each row reports the largest
    ``(b_n(x) - b_n(y)).(x - y) + L |x - y|^2`` seen; a row passes when that
    quantity stays below ``tol_rel * (1 + |x - y|^2)`` for every pair.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    rng = np.random.default_rng(seed)
    if radius is None:
        radius = 2.0 * td.s_n if not td.untamed else 100.0
    bounds = _region_bounds(td.s_n, radius)
    names = list(bounds)
    combos = [(a, b) for i, a in enumerate(names) for b in names[i:]]
    per = max(pairs // len(combos), 1)
    L = td.base.monotonicity_const
    d = td.base.state_dim
    rows = []
    for a, b in combos:
        x = _sample_shell(rng, per, d, *bounds[a])
        y = _sample_shell(rng, per, d, *bounds[b])
        diff = x - y
        sq = np.sum(diff * diff, axis=-1)
        viol = np.sum((td(x) - td(y)) * diff, axis=-1) + L * sq
        normed = viol / (1.0 + sq)
        label = a if a == b else f"{a}x{b}"
        rows.append(RegionRow(label, per, float(viol.max()), float(normed.max()), bool(normed.max() <= tol_rel)))
    return VerifyReport("monotonicity", td.n, td.alpha, td.s_n, tol_rel, rows)


def verify_growth(
    td: TamedDrift,
    points: int = 100_000,
    radius: Optional[float] = None,
    seed=0,
    tol_rel: float = 1e-9,
) -> VerifyReport:
    """Check ``|b_n(x)| <= (L + 1) n**alpha (1 + |x|)`` on sampled points.

    Rows carry the largest ratio of the two sides per region.  When
    ``|b(0)| > n**alpha`` the bound cannot hold at the origin, so the allowance
    is widened to ``1 + |b(0)|/n**alpha`` and the report is flagged.
    """
    rng = np.random.default_rng(seed)
    if radius is None:
        radius = 10.0 * td.s_n if not td.untamed else 100.0
    L = td.base.monotonicity_const
    b0 = float(np.linalg.norm(td.base.drift_at_origin))
    allowance = 1.0 + tol_rel
    flagged = False
    note = ""
    if b0 > td.level:
        allowance = 1.0 + b0 / td.level + tol_rel
        flagged = True
        note = f"|b(0)|={b0:g} exceeds n^alpha={td.level:g}; bound checked with allowance {allowance:g}"
    bounds = _region_bounds(td.s_n, radius)
    per = max(points // len(bounds), 1)
    rows = []
    for name, (lo, hi) in bounds.items():
        x = _sample_shell(rng, per, td.base.state_dim, lo, hi)
        if name == "inner":
            x[0] = 0.0
        size = np.linalg.norm(td(x), axis=-1)
        ratio = size / ((L + 1.0) * td.level * (1.0 + np.linalg.norm(x, axis=-1)))
        worst = float(ratio.max())
        rows.append(RegionRow(name, per, worst, worst, worst <= allowance))
    return VerifyReport("growth", td.n, td.alpha, td.s_n, allowance - 1.0, rows, flagged, note)


@dataclass
class SnBoundRow:
    n: int
    s_n: float
    ratio: float
    status: str  # "ok", "untamed" or "undefined"


@dataclass
class SnBoundReport:
    alpha: float
    exponent: float
    rows: list[SnBoundRow]

    @property
    def min_ratio(self) -> float:
        vals = [r.ratio for r in self.rows if r.status == "ok"]
        return min(vals) if vals else math.inf

    @property
    def passed(self) -> bool:
        return self.min_ratio > 0


def sn_lower_bound_report(problem: SdeProblem, alpha: float, n_list) -> SnBoundReport:
    """Tabulate ``(s_n - 2) n**(-alpha/(l+1))``, which should stay bounded away from 0."""
    if problem.growth_consts is None:
        raise ValueError("problem declares no growth constants; exponent l unknown")
    l = problem.growth_consts[1]
    exponent = alpha / (l + 1.0)
    rows = []
    for n in n_list:
        try:
            s = locate_s_n(problem, n, alpha)
        except SchemeUndefinedError:
            rows.append(SnBoundRow(n, math.nan, math.nan, "undefined"))
            continue
        if math.isinf(s):
            rows.append(SnBoundRow(n, s, math.inf, "untamed"))
        else:
            rows.append(SnBoundRow(n, s, (s - 2.0) * float(n) ** (-exponent), "ok"))
    return SnBoundReport(alpha, exponent, rows)
