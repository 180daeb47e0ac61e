"""SDE problem definitions and the built-in test problems.

Evaluators are vectorised over a leading batch axis: ``drift`` maps an array of
shape ``(..., d)`` to ``(..., d)`` and ``diffusion`` maps ``(..., d)`` to
``(..., d, m)``.  They must be pure functions of the state.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Evaluator = Callable[[np.ndarray], np.ndarray]
InitialSampler = Callable[[np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class A4Data:
    """Extra structure for constant-diffusion problems."""

    smoothness_const: float
    constant_diffusion: np.ndarray


@dataclass(frozen=True)
class SdeProblem:
    """A time-homogeneous SDE ``dX = b(X) dt + sigma(X) dW`` on ``[0, T]``.

    ``monotonicity_const`` is the constant ``L`` with
    ``(b(x) - b(y)).(x - y) <= -L |x - y|^2``.  ``growth_consts`` is ``(H, l)``
    for the polynomial Lipschitz bound on ``b``; ``None`` when the user only
    claims monotonicity.
    """

    name: str
    state_dim: int
    noise_dim: int
    drift: Evaluator
    diffusion: Evaluator
    monotonicity_const: float
    initial_sampler: InitialSampler
    moment_order: float
    horizon: float = 1.0
    growth_consts: Optional[tuple[float, float]] = None
    a4_data: Optional[A4Data] = None
    diffusion_lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.state_dim < 1 or self.noise_dim < 1:
            raise ValueError("state_dim and noise_dim must be >= 1")
        if not self.monotonicity_const > 0:
            raise ValueError(f"monotonicity constant must be positive, got {self.monotonicity_const}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.moment_order > 0:
            raise ValueError(f"moment_order must be positive, got {self.moment_order}")
        if self.growth_consts is not None:
            H, l = self.growth_consts
            if not (H > 0 and l >= 0):
                raise ValueError(f"growth constants need H > 0, l >= 0, got {self.growth_consts}")
        if self.a4_data is not None and self.a4_data.smoothness_const <= 0:
            raise ValueError("A4 smoothness constant must be positive")
        zero = np.zeros(self.state_dim)
        b0 = np.asarray(self.drift(zero), dtype=float)
        s0 = np.asarray(self.diffusion(zero), dtype=float)
        if b0.shape != (self.state_dim,):
            raise ValueError(f"drift returned shape {b0.shape}, expected ({self.state_dim},)")
        if s0.shape != (self.state_dim, self.noise_dim):
            raise ValueError(
                f"diffusion returned shape {s0.shape}, expected ({self.state_dim}, {self.noise_dim})"
            )
        if not (np.all(np.isfinite(b0)) and np.all(np.isfinite(s0))):
            raise ValueError("drift(0) and diffusion(0) must be finite")

    @property
    def drift_at_origin(self) -> np.ndarray:
        return np.asarray(self.drift(np.zeros(self.state_dim)), dtype=float)

    @property
    def growth_exponent(self) -> Optional[float]:
        return None if self.growth_consts is None else self.growth_consts[1]

    def without_noise(self) -> "SdeProblem":
        """Same drift, diffusion replaced by zero (and A4 data dropped)."""
        d, m = self.state_dim, self.noise_dim

        def zero_diffusion(x):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1] + (d, m))

        return dataclasses.replace(
            self,
            name=f"{self.name}-deterministic",
            diffusion=zero_diffusion,
            a4_data=None,
            diffusion_lipschitz=0.0,
        )

    def with_initial_point(self, x0) -> "SdeProblem":
        point = np.broadcast_to(np.asarray(x0, dtype=float), (self.state_dim,)).copy()
        return dataclasses.replace(self, initial_sampler=point_sampler(point))


def point_sampler(x0) -> InitialSampler:
    point = np.atleast_1d(np.asarray(x0, dtype=float)).copy()

    def sample(rng: np.random.Generator) -> np.ndarray:
        return point.copy()

    return sample


def scaled_normal_sampler(scale: float, dim: int = 1) -> InitialSampler:
    def sample(rng: np.random.Generator) -> np.ndarray:
        return scale * rng.standard_normal(dim)

    return sample


# Cubic drift shared by both built-in cubic problems: b(x) = 2 - x/10 - x^3/10.
# Written as repeated multiplication so results do not depend on the pow kernel.
def _cubic_drift(x):
    x = np.asarray(x, dtype=float)
    return 2.0 - 0.1 * x - 0.1 * (x * x * x)


def _affine_diffusion(x):
    x = np.asarray(x, dtype=float)
    return (1.0 + x)[..., None]


def _unit_diffusion(x):
    x = np.asarray(x, dtype=float)
    return np.ones(x.shape + (1,))


# p_0 = 3l + 4 with l = 2; the initial law 5*N(0, 1) has moments of every order.
_CUBIC_MOMENT_ORDER = 10.0
# Smallest H with |b(x)-b(y)| <= H (1+|x|+|y|)^2 |x-y|: the ratio
# (1 + x^2 + xy + y^2) / (10 (1+|x|+|y|)^2) peaks at x = y = 0.
_CUBIC_GROWTH = (0.1, 2.0)


def builtin_cubic_multiplicative() -> SdeProblem:
    """``dX = (2 - X/10 - X^3/10) dt + (1 + X) dW``, ``X(0) = 5 eta``."""
    return SdeProblem(
        name="cubic-mult",
        state_dim=1,
        noise_dim=1,
        drift=_cubic_drift,
        diffusion=_affine_diffusion,
        monotonicity_const=0.1,
        initial_sampler=scaled_normal_sampler(5.0),
        moment_order=_CUBIC_MOMENT_ORDER,
        horizon=1.0,
        growth_consts=_CUBIC_GROWTH,
        diffusion_lipschitz=1.0,
    )


def builtin_cubic_constant_diffusion() -> SdeProblem:
    """``dY = (2 - Y/10 - Y^3/10) dt + dW``, ``Y(0) = 5 eta``."""
    return SdeProblem(
        name="cubic-const",
        state_dim=1,
        noise_dim=1,
        drift=_cubic_drift,
        diffusion=_unit_diffusion,
        monotonicity_const=0.1,
        initial_sampler=scaled_normal_sampler(5.0),
        moment_order=_CUBIC_MOMENT_ORDER,
        horizon=1.0,
        growth_consts=_CUBIC_GROWTH,
        # |b'(x) - b'(y)| = 0.3 |x + y| |x - y| <= 0.3 (1+|x|+|y|) |x - y|
        a4_data=A4Data(smoothness_const=0.3, constant_diffusion=np.ones((1, 1))),
        diffusion_lipschitz=0.0,
    )


def builtin_linear_ou(theta: float, mu: float = 0.0, vol: float = 0.0, x0: float = 1.0) -> SdeProblem:
    """Ornstein-Uhlenbeck ``dX = theta (mu - X) dt + vol dW`` started at ``x0``."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")

    def drift(x):
        x = np.asarray(x, dtype=float)
        return theta * (mu - x)

    def diffusion(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), float(vol))

    return SdeProblem(
        name="ou",
        state_dim=1,
        noise_dim=1,
        drift=drift,
        diffusion=diffusion,
        monotonicity_const=float(theta),
        initial_sampler=point_sampler([x0]),
        moment_order=10.0,
        horizon=1.0,
        growth_consts=(float(theta), 0.0),
        a4_data=A4Data(smoothness_const=1.0, constant_diffusion=np.full((1, 1), float(vol))),
        diffusion_lipschitz=0.0,
    )


def ou_mean(theta: float, mu: float, x0: float, t: float) -> float:
    """Exact mean of the OU process at time ``t``."""
    return mu + (x0 - mu) * math.exp(-theta * t)


def ou_variance(theta: float, vol: float, t: float) -> float:
    return vol * vol * (1.0 - math.exp(-2.0 * theta * t)) / (2.0 * theta)


BUILTIN_PROBLEMS: dict[str, Callable[[], SdeProblem]] = {
    "cubic-mult": builtin_cubic_multiplicative,
    "cubic-const": builtin_cubic_constant_diffusion,
    "ou": lambda: builtin_linear_ou(1.0, 0.0, 1.0, 1.0),
}


def get_problem(name: str) -> SdeProblem:
    try:
        factory = BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILTIN_PROBLEMS)}") from None
    return factory()
