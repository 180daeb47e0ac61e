"""Reproducible Brownian increments on uniform grids.

Every random number is addressed by ``(master_seed, trial, role, index)``.  The
triple ``(master_seed, trial, role)`` is hashed into a Philox key and ``index``
is the position in that key's counter stream, so any trial can be regenerated
on any worker without replaying other trials.  Normals are produced by the
inverse normal CDF applied to one 64-bit word per draw, which keeps the draw
count per increment fixed and lets :func:`generate` start mid-stream.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .model import SdeProblem

ROLE_INCREMENTS = 0
ROLE_INITIAL = 1

#: recorded in experiment metadata
NORMAL_METHOD = "philox4x64-inverse-cdf-53bit"

_TWO_M53 = 2.0 ** -53


def grid_steps(n: int, horizon: float) -> int:
    """Number of steps of size ``1/n`` needed to cover ``[0, horizon]``."""
    steps = n * horizon
    nearest = round(steps)
    if abs(steps - nearest) <= 1e-9 * max(1.0, steps):
        return int(nearest)
    return int(math.ceil(steps))


def step_sizes(n: int, horizon: float) -> np.ndarray:
    """Step lengths; all ``1/n`` except a shorter last step when ``n*T`` is fractional."""
    steps = grid_steps(n, horizon)
    h = np.full(steps, 1.0 / n)
    h[-1] = horizon - (steps - 1) / n
    return h


def stream_key(master_seed: int, trial: int, role: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(master_seed), int(trial), int(role)])
    return ss.generate_state(2, np.uint64)


def _bit_generator(master_seed: int, trial: int, role: int, start: int = 0) -> np.random.Philox:
    bg = np.random.Philox(key=stream_key(master_seed, trial, role))
    # each counter block yields four 64-bit words
    blocks, rem = divmod(start, 4)
    if blocks:
        bg.advance(blocks)
    if rem:
        bg.random_raw(rem)
    return bg


def standard_normals(master_seed: int, trial: int, role: int, count: int, start: int = 0) -> np.ndarray:
    """Draws ``start .. start+count`` of the standard normal stream for one trial and role."""
    raw = _bit_generator(master_seed, trial, role, start).random_raw(count)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


@dataclass(frozen=True)
class IncrementGrid:
    """Wiener increments ``W(t_{k+1}) - W(t_k)`` on the grid ``t_k = k/n``."""

    n: int
    horizon: float
    noise_dim: int
    increments: np.ndarray
    seed_label: tuple[int, int]

    def __post_init__(self):
        expected = (grid_steps(self.n, self.horizon), self.noise_dim)
        if self.increments.shape != expected:
            raise ValueError(f"increments have shape {self.increments.shape}, expected {expected}")

    @property
    def steps(self) -> int:
        return self.increments.shape[0]

    def dump(self, path) -> None:
        """Write the grid as little-endian doubles after a small header.

        Header: magic ``b"SDEINC1\\0"``, then ``<q n, <d T, <q m, <q seed, <q trial``,
        followed by ``steps*m`` ``<f8`` values in row-major order.
        """
        seed, trial = self.seed_label
        with open(path, "wb") as fh:
            fh.write(b"SDEINC1\0")
            fh.write(struct.pack("<qdqqq", self.n, self.horizon, self.noise_dim, seed, trial))
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "IncrementGrid":
        with open(path, "rb") as fh:
            if fh.read(8) != b"SDEINC1\0":
                raise ValueError(f"{path}: not an increment dump")
            n, horizon, m, seed, trial = struct.unpack("<qdqqq", fh.read(40))
            data = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
        return cls(n, horizon, m, data.reshape(-1, m), (seed, trial))


def _check_grid_args(n: int, horizon: float, m: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if m < 1:
        raise ValueError(f"noise dimension must be >= 1, got {m}")


def generate(master_seed: int, trial: int, n: int, horizon: float = 1.0, m: int = 1) -> IncrementGrid:
    """Increments for one trial on the grid with spacing ``1/n``."""
    _check_grid_args(n, horizon, m)
    h = step_sizes(n, horizon)
    z = standard_normals(master_seed, trial, ROLE_INCREMENTS, len(h) * m).reshape(len(h), m)
    return IncrementGrid(n, horizon, m, z * np.sqrt(h)[:, None], (int(master_seed), int(trial)))


def generate_batch(master_seed: int, trials, n: int, horizon: float = 1.0, m: int = 1) -> np.ndarray:
    """Increments for several trials stacked as ``(len(trials), steps, m)``.

    Row ``i`` equals ``generate(master_seed, trials[i], n, horizon, m).increments``.
    """
    _check_grid_args(n, horizon, m)
    h = step_sizes(n, horizon)
    scale = np.sqrt(h)[:, None]
    out = np.empty((len(trials), len(h), m))
    for i, trial in enumerate(trials):
        out[i] = standard_normals(master_seed, trial, ROLE_INCREMENTS, len(h) * m).reshape(len(h), m) * scale
    return out


def coarsen_array(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` steps along the step axis (axis -2)."""
    if factor < 1:
        raise ValueError(f"coarsening factor must be >= 1, got {factor}")
    steps = increments.shape[-2]
    if steps % factor:
        raise ValueError(f"factor {factor} does not divide grid length {steps}")
    if factor == 1:
        return increments
    shape = increments.shape[:-2] + (steps // factor, factor, increments.shape[-1])
    return increments.reshape(shape).sum(axis=-2)


def coarsen(fine: IncrementGrid, factor: int) -> IncrementGrid:
    """Grid with ``n / factor`` steps per unit time carrying the same Wiener path."""
    if factor < 1 or fine.n % factor:
        raise ValueError(f"factor {factor} does not divide n={fine.n}")
    if factor == 1:
        return fine
    return IncrementGrid(
        fine.n // factor,
        fine.horizon,
        fine.noise_dim,
        coarsen_array(fine.increments, factor),
        fine.seed_label,
    )


def initial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Generator for the initial value of a trial; independent of its increments."""
    return np.random.Generator(_bit_generator(master_seed, trial, ROLE_INITIAL))


def sample_initial(master_seed: int, trial: int, problem: SdeProblem) -> np.ndarray:
    x0 = np.asarray(problem.initial_sampler(initial_rng(master_seed, trial)), dtype=float)
    return x0.reshape(problem.state_dim)


def sample_initial_batch(master_seed: int, trials, problem: SdeProblem) -> np.ndarray:
    return np.stack([sample_initial(master_seed, t, problem) for t in trials])
