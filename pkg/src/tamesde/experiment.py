"""Monte Carlo strong errors, moment sweeps and convergence-rate fits.

Trials are split into fixed-size chunks (independent of the worker count), each
chunk regenerates its own increments from the counter-based streams, and
per-trial results are concatenated in trial order before any reduction.  That
makes every table bitwise identical whatever ``workers`` is.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import paths
from .model import SdeProblem
from .solver import MonotonePolygonal, SchemeKind, Vanilla, simulate_batch
from .taming import SchemeUndefinedError, state_norm

log = logging.getLogger(__name__)

CHUNK_TRIALS = 128
Z95 = 1.959963984540054


def _chunks(trials: int, size: int = CHUNK_TRIALS) -> list[range]:
    return [range(s, min(s + size, trials)) for s in range(0, trials, size)]


def _map_chunks(fn, trials: int, workers: int) -> list:
    chunks = _chunks(trials)
    if workers <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    if len(values) == 0:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, math.inf
    return mean, float(Z95 * np.std(values, ddof=1) / math.sqrt(len(values)))


def _fmt(x: float) -> str:
    return repr(float(x))


def _scheme_meta(scheme: SchemeKind) -> tuple[str, Optional[float]]:
    return scheme.label, getattr(scheme, "alpha", None)


# ---------------------------------------------------------------- strong error


@dataclass
class ErrorRow:
    n: int
    trials: int
    mse: float
    ci: float
    blowups: int
    error: Optional[str] = None


@dataclass
class RateFit:
    """Least-squares line through ``(log2 n, log2 mse)``."""

    slope: float
    intercept: float
    window: list[int]
    residual: float
    excluded: list[int] = field(default_factory=list)


@dataclass
class ErrorTable:
    rows: list[ErrorRow]
    metadata: dict

    def row(self, n: int) -> ErrorRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_csv(self, fit: Optional[RateFit] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "trials", "mse", "ci", "blowups"])
        for r in self.rows:
            w.writerow([r.n, r.trials, _fmt(r.mse), _fmt(r.ci), r.blowups])
        for key, value in self.metadata.items():
            buf.write(f"# {key}={value}\n")
        for r in self.rows:
            if r.error:
                buf.write(f"# n={r.n}: {r.error}\n")
        if fit is not None:
            buf.write(f"# rate slope={_fmt(fit.slope)} intercept={_fmt(fit.intercept)} "
                      f"residual={_fmt(fit.residual)} window={','.join(map(str, fit.window))}\n")
        return buf.getvalue()

    def plot_data_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log2_n", "log2_mse"])
        for r in self.rows:
            if r.mse > 0 and math.isfinite(r.mse):
                w.writerow([_fmt(math.log2(r.n)), _fmt(math.log2(r.mse))])
        return buf.getvalue()


def strong_error(
    problem: SdeProblem,
    scheme: SchemeKind,
    n_list: Sequence[int],
    n_ref: int,
    trials: int,
    p: float = 2.0,
    master_seed: int = 0,
    workers: int = 1,
) -> ErrorTable:
    """Estimate ``E|X_ref(T) - X_n(T)|^p`` for each ``n`` against the same scheme at ``n_ref``.

    Each trial draws one fine increment grid and one initial value; the
    reference run is shared by all coarse ``n``.  Trials where either run blew
    up are left out of the mean and counted.  A coarse ``n`` for which the
    scheme is undefined gets a row with ``mse = nan`` and an error message.
    """
    n_list = sorted(set(int(n) for n in n_list))
    if not n_list:
        raise ValueError("n_list is empty")
    for n in n_list:
        if n < 1 or n_ref % n:
            raise ValueError(f"n={n} does not divide n_ref={n_ref}")
    if trials < 2:
        raise ValueError("need at least 2 trials")
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")

    ref_drift = scheme.drift_for(problem, n_ref)
    drifts: dict[int, object] = {}
    failures: dict[int, str] = {}
    for n in n_list:
        try:
            drifts[n] = ref_drift if n == n_ref else scheme.drift_for(problem, n)
        except SchemeUndefinedError as exc:
            failures[n] = f"scheme undefined: {exc}"

    def run(chunk: range):
        dw = paths.generate_batch(master_seed, chunk, n_ref, problem.horizon, problem.noise_dim)
        x0 = paths.sample_initial_batch(master_seed, chunk, problem)
        ref = simulate_batch(problem, ref_drift, n_ref, dw, x0)
        out = {}
        for n, drift in drifts.items():
            if n == n_ref:
                coarse = ref
            else:
                coarse = simulate_batch(problem, drift, n, paths.coarsen_array(dw, n_ref // n), x0)
            err = state_norm(ref.endpoint - coarse.endpoint) ** p
            out[n] = (err, ref.blowup | coarse.blowup)
        return out

    parts = _map_chunks(run, trials, workers)
    rows = []
    for n in n_list:
        if n in failures:
            rows.append(ErrorRow(n, trials, math.nan, math.nan, 0, failures[n]))
            continue
        err = np.concatenate([part[n][0] for part in parts])
        blown = np.concatenate([part[n][1] for part in parts])
        mse, ci = _mean_ci(err[~blown])
        rows.append(ErrorRow(n, trials, mse, ci, int(blown.sum())))
    label, alpha = _scheme_meta(scheme)
    meta = {
        "problem": problem.name,
        "scheme": label,
        "alpha": alpha,
        "p": p,
        "n_ref": n_ref,
        "master_seed": master_seed,
        "normals": paths.NORMAL_METHOD,
    }
    return ErrorTable(rows, meta)


def fit_rate(table: ErrorTable, window: Optional[Sequence[int]] = None) -> RateFit:
    """Fit ``log2 mse = slope * log2 n + intercept``.

    ``window`` lists the ``n`` values to use; by default the three largest.
    Rows with non-positive or undefined mse are dropped with a log notice.
    """
    if window is None:
        window = [r.n for r in table.rows][-3:]
    chosen = [table.row(n) for n in window]
    usable = [r for r in chosen if math.isfinite(r.mse) and r.mse > 0]
    excluded = [r.n for r in chosen if r not in usable]
    if excluded:
        log.warning("rate fit ignores rows with zero or undefined mse: %s", excluded)
    if len(usable) < 2:
        raise ValueError("rate fit needs at least two rows with positive mse")
    x = np.log2([r.n for r in usable])
    y = np.log2([r.mse for r in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RateFit(float(slope), float(intercept), [r.n for r in usable], resid, excluded)


# ---------------------------------------------------------------- moments


@dataclass
class MomentRow:
    n: int
    p: float
    estimate: float
    ci: float
    blowups: int

    @property
    def reliable(self) -> bool:
        return self.blowups == 0


@dataclass
class MomentReport:
    rows: list[MomentRow]
    metadata: dict

    def estimates(self, p: float) -> list[float]:
        return [r.estimate for r in self.rows if r.p == p]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "p", "estimate", "ci", "blowups"])
        for r in self.rows:
            w.writerow([r.n, _fmt(r.p), _fmt(r.estimate), _fmt(r.ci), r.blowups])
        for key, value in self.metadata.items():
            buf.write(f"# {key}={value}\n")
        for r in self.rows:
            if not r.reliable:
                buf.write(f"# n={r.n} p={r.p}: {r.blowups} blow-ups, estimate unreliable\n")
        return buf.getvalue()


def moment_sweep(
    problem: SdeProblem,
    scheme: SchemeKind,
    n_list: Sequence[int],
    trials: int,
    p_list: Sequence[float],
    master_seed: int = 0,
    workers: int = 1,
) -> MomentReport:
    """Estimate ``E[max_k |X_n(t_k)|^p]`` for each ``n`` and ``p``.

    When every ``n`` divides the largest one, all grids are coarsened from a
    single fine path per trial; otherwise each ``n`` gets its own stream.
    """
    n_list = sorted(set(int(n) for n in n_list))
    for p in p_list:
        if not 0 < p <= problem.moment_order:
            raise ValueError(f"moment order {p} outside (0, p_0={problem.moment_order}]")
    n_max = n_list[-1]
    coupled = all(n_max % n == 0 for n in n_list)
    drifts = {n: scheme.drift_for(problem, n) for n in n_list}

    def run(chunk: range):
        x0 = paths.sample_initial_batch(master_seed, chunk, problem)
        if coupled:
            fine = paths.generate_batch(master_seed, chunk, n_max, problem.horizon, problem.noise_dim)
        out = {}
        for n in n_list:
            if coupled:
                dw = paths.coarsen_array(fine, n_max // n)
            else:
                dw = paths.generate_batch(master_seed, chunk, n, problem.horizon, problem.noise_dim)
            res = simulate_batch(problem, drifts[n], n, dw, x0)
            out[n] = (res.sup_norm, res.blowup)
        return out

    parts = _map_chunks(run, trials, workers)
    rows = []
    for n in n_list:
        sup = np.concatenate([part[n][0] for part in parts])
        blown = np.concatenate([part[n][1] for part in parts])
        for p in p_list:
            est, ci = _mean_ci(sup[~blown] ** p)
            rows.append(MomentRow(n, float(p), est, ci, int(blown.sum())))
    label, alpha = _scheme_meta(scheme)
    meta = {
        "problem": problem.name,
        "scheme": label,
        "alpha": alpha,
        "master_seed": master_seed,
        "coupled": coupled,
        "normals": paths.NORMAL_METHOD,
    }
    return MomentReport(rows, meta)


# ---------------------------------------------------------------- divergence


@dataclass
class DivergenceRow:
    scheme: str
    trials: int
    blowup_fraction: float
    median_endpoint: float
    max_sup: float


@dataclass
class DivergenceReport:
    n: int
    x0: float
    rows: list[DivergenceRow]

    def row(self, scheme: str) -> DivergenceRow:
        return next(r for r in self.rows if r.scheme == scheme)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "trials", "blowup_fraction", "median_endpoint", "max_sup"])
        for r in self.rows:
            w.writerow([r.scheme, r.trials, _fmt(r.blowup_fraction), _fmt(r.median_endpoint), _fmt(r.max_sup)])
        buf.write(f"# n={self.n} x0={self.x0}\n")
        return buf.getvalue()


def divergence_demo(
    problem: SdeProblem,
    n_small: int,
    x0_large,
    trials: int = 100,
    master_seed: int = 0,
    alpha: float = 0.5,
) -> DivergenceReport:
    """Run plain Euler and the monotone scheme from the same large start.

    Median endpoint magnitude is taken over the trials that stayed finite
    (``nan`` if none did).
    """
    start = np.broadcast_to(np.asarray(x0_large, dtype=float), (problem.state_dim,))
    chunk = range(trials)
    dw = paths.generate_batch(master_seed, chunk, n_small, problem.horizon, problem.noise_dim)
    x0 = np.tile(start, (trials, 1))
    rows = []
    for scheme in (Vanilla(), MonotonePolygonal(alpha)):
        res = simulate_batch(problem, scheme.drift_for(problem, n_small), n_small, dw, x0)
        ok = ~res.blowup
        size = state_norm(res.endpoint[ok])
        rows.append(
            DivergenceRow(
                scheme.label,
                trials,
                float(res.blowup.mean()),
                float(np.median(size)) if ok.any() else math.nan,
                float(res.sup_norm[ok].max()) if ok.any() else math.inf,
            )
        )
    return DivergenceReport(n_small, float(start[0]), rows)
