"""Problem definitions from a flat ``key = value`` text file.

Grammar (one key per line, ``#`` starts a comment)::

    name          = my-problem          # optional
    state_dim     = 1                   # d
    noise_dim     = 1                   # m, default 1
    drift.1       = 2 - 0.1 x1 - 0.1 x1^3
    drift.2       = ...                 # one line per coordinate 1..d
    diffusion     = 1                   # constant part, d rows of m numbers, rows split by ';'
    diffusion.x1  = 1                   # optional coefficient matrix multiplying x1, same layout
    monotonicity  = 0.1                 # L
    growth_H      = 0.1                 # optional, together with growth_l
    growth_l      = 2
    moment_order  = 10                  # p_0
    horizon       = 1                   # T, default 1
    initial       = normal 5            # 'normal <scale>' or 'point <x1> ... <xd>'
    smoothness    = 0.3                 # optional S; only allowed with constant diffusion
    diffusion_lipschitz = 1             # optional

Drift lines are sums of monomials ``c x1^a x2^b ...``; ``*`` between factors
is optional.  Diffusion is affine: ``sigma(x) = A0 + sum_i x_i A_i``.
"""

from __future__ import annotations

import configparser
import re
import warnings
from pathlib import Path

import numpy as np

from .model import A4Data, SdeProblem, point_sampler, scaled_normal_sampler


class ConfigError(ValueError):
    pass


class MonotonicityWarning(UserWarning):
    """The declared monotonicity constant failed a sampled spot check."""


_TERM = re.compile(
    r"""\s*(?P<sign>[+-])?\s*
        (?P<coef>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*
        (?P<factors>(?:x\d+(?:\^\d+)?\s*\*?\s*)*)""",
    re.VERBOSE,
)
_FACTOR = re.compile(r"x(\d+)(?:\^(\d+))?")


def parse_polynomial(text: str, dim: int) -> list[tuple[float, tuple[int, ...]]]:
    """Parse ``"2 - 0.1 x1 - 0.1 x1^3"`` into ``[(coef, exponents), ...]``."""
    terms = []
    pos = 0
    text = text.strip()
    if not text:
        raise ConfigError("empty polynomial")
    while pos < len(text):
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos or not (m.group("coef") or m.group("factors")):
            raise ConfigError(f"cannot parse polynomial near {text[pos:]!r}")
        if terms and not m.group("sign"):
            raise ConfigError(f"missing '+' or '-' before {text[pos:]!r}")
        coef = float(m.group("coef")) if m.group("coef") else 1.0
        if m.group("sign") == "-":
            coef = -coef
        powers = [0] * dim
        for var, exp in _FACTOR.findall(m.group("factors") or ""):
            i = int(var)
            if not 1 <= i <= dim:
                raise ConfigError(f"variable x{i} out of range for state_dim={dim}")
            powers[i - 1] += int(exp) if exp else 1
        terms.append((coef, tuple(powers)))
        pos = m.end()
    return terms


def _ipow(v: np.ndarray, k: int) -> np.ndarray:
    out = np.ones_like(v)
    for _ in range(k):
        out = out * v
    return out


def polynomial_field(components: list[list[tuple[float, tuple[int, ...]]]]):
    """Vectorised evaluator for a vector of polynomials."""

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for j, terms in enumerate(components):
            acc = np.zeros(x.shape[:-1])
            for coef, powers in terms:
                mono = np.full(x.shape[:-1], coef)
                for i, k in enumerate(powers):
                    if k:
                        mono = mono * _ipow(x[..., i], k)
                acc = acc + mono
            out[..., j] = acc
        return out

    return evaluate


def _parse_matrix(text: str, d: int, m: int, key: str) -> np.ndarray:
    rows = [r.replace(",", " ").split() for r in text.split(";")]
    try:
        mat = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if mat.shape != (d, m):
        raise ConfigError(f"{key}: expected a {d}x{m} matrix, got shape {mat.shape}")
    return mat


def affine_diffusion(const: np.ndarray, linear: dict[int, np.ndarray]):
    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(const, x.shape[:-1] + const.shape).copy()
        for i, mat in linear.items():
            out = out + x[..., i, None, None] * mat
        return out

    return evaluate


def _number(section, key, required=True, default=None, cast=float):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return cast(section[key])
    except ValueError:
        raise ConfigError(f"{key}: not a valid number: {section[key]!r}") from None


def parse_problem_config(text: str, source: str = "<config>") -> SdeProblem:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[problem]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sec = parser["problem"]
    if not len(sec):
        raise ConfigError(f"{source}: no keys found")

    d = _number(sec, "state_dim", cast=int)
    m = _number(sec, "noise_dim", required=False, default=1, cast=int)
    if d < 1 or m < 1:
        raise ConfigError("state_dim and noise_dim must be >= 1")
    components = []
    for j in range(1, d + 1):
        key = f"drift.{j}"
        if key not in sec:
            raise ConfigError(f"missing required key {key!r}")
        components.append(parse_polynomial(sec[key], d))

    if "diffusion" not in sec:
        raise ConfigError("missing required key 'diffusion'")
    const = _parse_matrix(sec["diffusion"], d, m, "diffusion")
    linear = {}
    for key in sec:
        mm = re.fullmatch(r"diffusion\.x(\d+)", key)
        if mm:
            i = int(mm.group(1))
            if not 1 <= i <= d:
                raise ConfigError(f"{key}: variable out of range")
            linear[i - 1] = _parse_matrix(sec[key], d, m, key)
        elif key.startswith("diffusion."):
            raise ConfigError(f"unknown key {key!r}")

    L = _number(sec, "monotonicity")
    H = _number(sec, "growth_h", required=False)
    l = _number(sec, "growth_l", required=False)
    if (H is None) != (l is None):
        raise ConfigError("growth_H and growth_l must be given together")
    growth = None if H is None else (H, l)

    init = sec.get("initial", "").split()
    if not init:
        raise ConfigError("missing required key 'initial'")
    try:
        if init[0] == "normal" and len(init) == 2:
            sampler = scaled_normal_sampler(float(init[1]), d)
        elif init[0] == "point" and len(init) == 1 + d:
            sampler = point_sampler([float(v) for v in init[1:]])
        else:
            raise ConfigError(f"initial: expected 'normal <scale>' or 'point' with {d} values")
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None

    a4 = None
    smooth = _number(sec, "smoothness", required=False)
    if smooth is not None:
        if linear:
            raise ConfigError("smoothness (A4) requires a constant diffusion")
        a4 = A4Data(smooth, const)

    try:
        problem = SdeProblem(
            name=sec.get("name", Path(source).stem),
            state_dim=d,
            noise_dim=m,
            drift=polynomial_field(components),
            diffusion=affine_diffusion(const, linear),
            monotonicity_const=L,
            initial_sampler=sampler,
            moment_order=_number(sec, "moment_order"),
            horizon=_number(sec, "horizon", required=False, default=1.0),
            growth_consts=growth,
            a4_data=a4,
            diffusion_lipschitz=_number(sec, "diffusion_lipschitz", required=False),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spot_check_monotonicity(problem)
    return problem


def spot_check_monotonicity(problem: SdeProblem, pairs: int = 1000, radius: float = 10.0, seed: int = 0) -> bool:
    """Sample pairs and warn if the declared ``L`` is contradicted.

    Sampling can only falsify the constant, never certify it.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-radius, radius, (pairs, problem.state_dim))
    y = rng.uniform(-radius, radius, (pairs, problem.state_dim))
    diff = x - y
    sq = np.sum(diff * diff, axis=-1)
    viol = np.sum((problem.drift(x) - problem.drift(y)) * diff, axis=-1) + problem.monotonicity_const * sq
    worst = int(np.argmax(viol / (1.0 + sq)))
    if viol[worst] > 1e-9 * (1.0 + sq[worst]):
        warnings.warn(
            f"declared monotonicity constant L={problem.monotonicity_const} is violated at "
            f"x={x[worst].tolist()}, y={y[worst].tolist()}",
            MonotonicityWarning,
            stacklevel=2,
        )
        return False
    return True


def load_problem_config(path) -> SdeProblem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_problem_config(text, source=str(path))
