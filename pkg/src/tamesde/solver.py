"""Explicit one-step schemes on the grid ``t_k = k/n``.

All schemes share the recursion ``X_{k+1} = X_k + h_k b_n(X_k) + sigma(X_k) dW_k``;
they differ only in the drift ``b_n`` used.  Work is vectorised over a batch of
independent trials.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import paths
from .model import SdeProblem
from .taming import DEFAULT_ALPHA, TamedDrift, _check_alpha, classical_tamed_eval, state_norm

#: states beyond this magnitude count as blown up
OVERFLOW_GUARD = 1e150


@dataclass(frozen=True)
class Vanilla:
    """Plain Euler-Maruyama with the original drift."""

    label = "vanilla"

    def drift_for(self, problem: SdeProblem, n: int) -> Callable[[np.ndarray], np.ndarray]:
        return problem.drift


@dataclass(frozen=True)
class ClassicalTamed:
    """Drift ``b / (1 + n**-alpha |b|)``."""

    alpha: float = DEFAULT_ALPHA
    label = "tamed"

    def __post_init__(self):
        _check_alpha(self.alpha)

    def drift_for(self, problem, n):
        return lambda x: classical_tamed_eval(problem, n, self.alpha, x)


@dataclass(frozen=True)
class MonotonePolygonal:
    """Monotonicity-preserving tamed drift; raises SchemeUndefinedError when ``s_n <= 2``."""

    alpha: float = DEFAULT_ALPHA
    label = "monotone"

    def __post_init__(self):
        _check_alpha(self.alpha)

    def drift_for(self, problem, n):
        return TamedDrift.build(problem, n, self.alpha)


SchemeKind = Union[Vanilla, ClassicalTamed, MonotonePolygonal]


def scheme_from_name(name: str, alpha: float = DEFAULT_ALPHA) -> SchemeKind:
    if name == "vanilla":
        return Vanilla()
    if name == "tamed":
        return ClassicalTamed(alpha)
    if name == "monotone":
        return MonotonePolygonal(alpha)
    raise ValueError(f"unknown scheme {name!r}; choose vanilla, tamed or monotone")


@dataclass
class SimulationOutput:
    """Endpoint, discrete running sup of ``|X|`` and blow-up flag.

    For batched runs each field carries a leading trial axis.  ``path`` holds
    the grid values ``X_0..X_N`` when requested.
    """

    endpoint: np.ndarray
    sup_norm: np.ndarray
    blowup: np.ndarray
    path: Optional[np.ndarray] = None

    @property
    def blowup_flag(self) -> bool:
        return bool(np.any(self.blowup))


def _diffusion_term(problem: SdeProblem, x: np.ndarray, dw: np.ndarray) -> np.ndarray:
    sig = problem.diffusion(x)
    if problem.noise_dim == 1:
        return sig[..., 0] * dw
    return np.sum(sig * dw[..., None, :], axis=-1)


def simulate_batch(
    problem: SdeProblem,
    drift: Callable[[np.ndarray], np.ndarray],
    n: int,
    dw: np.ndarray,
    x0: np.ndarray,
    record_path: bool = False,
) -> SimulationOutput:
    """Run the recursion for a batch of trials.

    ``dw`` has shape ``(batch, steps, m)`` and ``x0`` shape ``(batch, d)``.  A
    trial is frozen at its last finite state once any component leaves
    ``[-OVERFLOW_GUARD, OVERFLOW_GUARD]`` or turns non-finite.
    """
    batch, steps, m = dw.shape
    d = problem.state_dim
    if m != problem.noise_dim or x0.shape != (batch, d):
        raise ValueError(
            f"shape mismatch: increments {dw.shape}, x0 {x0.shape} for d={d}, m={problem.noise_dim}"
        )
    expected = paths.grid_steps(n, problem.horizon)
    if steps != expected:
        raise ValueError(f"grid has {steps} steps, scheme with n={n} over T={problem.horizon} needs {expected}")
    h = paths.step_sizes(n, problem.horizon)

    x = np.array(x0, dtype=float)
    dead = ~np.all(np.isfinite(x), axis=-1) | np.any(np.abs(x) > OVERFLOW_GUARD, axis=-1)
    sup = np.where(dead, math.inf, state_norm(x))
    all_live = not dead.any()
    idx = np.arange(batch)
    trace = np.empty((batch, steps + 1, d)) if record_path else None
    if record_path:
        trace[:, 0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            if all_live:
                xl, dwk = x, dw[:, k]
            else:
                idx = np.flatnonzero(~dead)
                xl, dwk = x[idx], dw[idx, k]
            step = xl + h[k] * drift(xl) + _diffusion_term(problem, xl, dwk)
            bad = ~np.all(np.isfinite(step), axis=-1) | np.any(np.abs(step) > OVERFLOW_GUARD, axis=-1)
            if all_live and not bad.any():
                x = step
                sup = np.maximum(sup, state_norm(step))
            else:
                dead[idx[bad]] = True
                good = idx[~bad]
                x = x.copy()
                x[good] = step[~bad]
                sup[good] = np.maximum(sup[good], state_norm(step[~bad]))
                all_live = False
            if record_path:
                trace[:, k + 1] = x
    return SimulationOutput(x, sup, dead, trace)


def simulate(
    problem: SdeProblem,
    scheme: SchemeKind,
    n: int,
    grid: paths.IncrementGrid,
    x0,
    record_path: bool = False,
) -> SimulationOutput:
    """Single-trial run on ``grid`` (whose ``n`` must match)."""
    if grid.n != n:
        raise ValueError(f"grid has n={grid.n}, expected {n}")
    if grid.noise_dim != problem.noise_dim:
        raise ValueError(f"grid noise dimension {grid.noise_dim} != problem noise dimension {problem.noise_dim}")
    x0 = np.asarray(x0, dtype=float).reshape(1, problem.state_dim)
    out = simulate_batch(problem, scheme.drift_for(problem, n), n, grid.increments[None], x0, record_path)
    return SimulationOutput(
        out.endpoint[0],
        out.sup_norm[0],
        out.blowup[0],
        None if out.path is None else out.path[0],
    )


def simulate_pair(
    problem: SdeProblem,
    scheme: SchemeKind,
    n_coarse: int,
    fine: paths.IncrementGrid,
    x0,
) -> tuple[SimulationOutput, SimulationOutput]:
    """Coarse and fine runs driven by the same Wiener path and initial value."""
    if n_coarse < 1 or fine.n % n_coarse:
        raise ValueError(f"n_coarse={n_coarse} does not divide fine n={fine.n}")
    coarse = paths.coarsen(fine, fine.n // n_coarse)
    return (
        simulate(problem, scheme, n_coarse, coarse, x0),
        simulate(problem, scheme, fine.n, fine, x0),
    )


def write_trajectory_csv(path_or_file, problem: SdeProblem, n: int, trajectory: np.ndarray) -> None:
    """Write ``step,t,x1..xd`` rows for a single recorded path."""
    times = np.concatenate([[0.0], np.cumsum(paths.step_sizes(n, problem.horizon))])
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t"] + [f"x{i + 1}" for i in range(problem.state_dim)])
        for k, (t, state) in enumerate(zip(times, trajectory)):
            w.writerow([k, repr(float(t))] + [repr(float(v)) for v in state])
    finally:
        if own:
            fh.close()
