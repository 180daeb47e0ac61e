"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 scheme undefined, 4 runtime or I/O
failure (including a failed ``verify``).  Every failure prints exactly one line
``tamesde: error[<CODE>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import experiment, taming
from .config import ConfigError, load_problem_config
from .model import BUILTIN_PROBLEMS, SdeProblem, get_problem
from .solver import scheme_from_name

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNDEFINED = 3
EXIT_RUNTIME = 4

COMMANDS = ("table", "rate", "moments", "diverge", "verify")


class CliError(Exception):
    def __init__(self, code: str, status: int, message: str):
        super().__init__(message)
        self.code = code
        self.status = status


@dataclass
class RunConfig:
    command: str
    problem: Optional[str] = None
    config: Optional[Path] = None
    scheme: str = "monotone"
    alpha: float = 0.5
    n_list: list[int] = field(default_factory=lambda: [2**k for k in range(11, 16)])
    n_ref: int = 2**16
    trials: int = 1000
    p: list[float] = field(default_factory=lambda: [2.0])
    master_seed: int = 0
    workers: int = 1
    out: Optional[Path] = None
    x0: float = 50.0
    deterministic: bool = False

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise CliError("CONFIG", EXIT_CONFIG, f"unknown command {self.command!r}")
        if (self.problem is None) == (self.config is None):
            raise CliError("CONFIG", EXIT_CONFIG, "give exactly one of --problem or --config")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise CliError("CONFIG", EXIT_CONFIG, "--n must be a non-empty list of positive integers")
        if not 0 < self.alpha <= 0.5:
            raise CliError("CONFIG", EXIT_CONFIG, f"--alpha must lie in (0, 0.5], got {self.alpha}")
        if self.command in ("table", "rate"):
            bad = [n for n in self.n_list if self.n_ref % n]
            if bad:
                raise CliError("CONFIG", EXIT_CONFIG, f"--n-ref {self.n_ref} is not a multiple of {bad}")
            if self.trials < 2:
                raise CliError("CONFIG", EXIT_CONFIG, "--trials must be at least 2")
        if self.trials < 1 or self.workers < 1:
            raise CliError("CONFIG", EXIT_CONFIG, "--trials and --workers must be positive")
        if any(not p > 0 for p in self.p):
            raise CliError("CONFIG", EXIT_CONFIG, "--p values must be positive")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("CONFIG", EXIT_CONFIG, message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tamesde", description="Monotone tamed Euler scheme experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "table": "strong-error table against a fine reference",
        "rate": "strong-error table plus fitted log-log slope",
        "moments": "Monte Carlo moments of the running sup",
        "diverge": "plain Euler versus the monotone scheme from a large start",
        "verify": "sampling checks of the tamed drift",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        src = p.add_mutually_exclusive_group()
        src.add_argument("--problem", choices=sorted(BUILTIN_PROBLEMS))
        src.add_argument("--config", type=Path)
        p.add_argument("--scheme", choices=["vanilla", "tamed", "monotone"], default="monotone")
        p.add_argument("--alpha", type=float, default=0.5)
        p.add_argument("--n", dest="n_list", type=_int_list, default=None)
        p.add_argument("--n-ref", type=int, default=2**16)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--p", type=_float_list, default=[2.0])
        p.add_argument("--seed", dest="master_seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", type=Path, default=None)
        if name == "diverge":
            p.add_argument("--x0", type=float, default=50.0)
            p.add_argument("--deterministic", action="store_true", help="drop the diffusion term")
    return parser


_DEFAULT_N = {
    "table": [2**k for k in range(11, 16)],
    "rate": [2**k for k in range(11, 16)],
    "moments": [2**k for k in range(8, 15, 2)],
    "diverge": [16],
    "verify": [2**11, 2**12, 2**16],
}
_DEFAULT_TRIALS = {"table": 1000, "rate": 1000, "moments": 2000, "diverge": 100, "verify": 1}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cmd = args.command
    cfg = RunConfig(
        command=cmd,
        problem=args.problem,
        config=args.config,
        scheme=args.scheme,
        alpha=args.alpha,
        n_list=args.n_list if args.n_list is not None else list(_DEFAULT_N[cmd]),
        n_ref=args.n_ref,
        trials=args.trials if args.trials is not None else _DEFAULT_TRIALS[cmd],
        p=args.p,
        master_seed=args.master_seed,
        workers=args.workers,
        out=args.out,
        x0=getattr(args, "x0", 50.0),
        deterministic=getattr(args, "deterministic", False),
    )
    cfg.validate()
    return cfg


def _load_problem(cfg: RunConfig) -> SdeProblem:
    try:
        if cfg.config is not None:
            return load_problem_config(cfg.config)
        return get_problem(cfg.problem)
    except (ConfigError, ValueError) as exc:
        raise CliError("CONFIG", EXIT_CONFIG, str(exc)) from None


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError("IO", EXIT_RUNTIME, f"cannot write {path}: {exc.strerror}") from None


def _plot_path(out: Path) -> Path:
    return out.with_name(out.stem + ".plot.csv")


def _run_table(cfg: RunConfig, problem: SdeProblem, out: Path, fit: bool) -> None:
    scheme = scheme_from_name(cfg.scheme, cfg.alpha)
    table = experiment.strong_error(
        problem, scheme, cfg.n_list, cfg.n_ref, cfg.trials, cfg.p[0], cfg.master_seed, cfg.workers
    )
    undefined = [r for r in table.rows if r.error]
    rate = None
    if fit:
        try:
            rate = experiment.fit_rate(table)
        except ValueError as exc:
            raise CliError("RUNTIME", EXIT_RUNTIME, str(exc)) from None
    _write(out, table.to_csv(rate))
    _write(_plot_path(out), table.plot_data_csv())
    print(f"{problem.name} / {scheme.label}: p={cfg.p[0]:g}, n_ref={cfg.n_ref}, trials={cfg.trials}")
    for r in table.rows:
        status = r.error or f"mse={r.mse:.3e} +/- {r.ci:.1e}  blowups={r.blowups}"
        print(f"  n={r.n:>8d}  {status}")
    if rate is not None:
        print(f"  fitted slope {rate.slope:.3f} over n={rate.window}")
    print(f"wrote {out} and {_plot_path(out)}")
    if undefined:
        raise CliError("SCHEME_UNDEFINED", EXIT_UNDEFINED, undefined[0].error)


def _run_moments(cfg: RunConfig, problem: SdeProblem, out: Path) -> None:
    scheme = scheme_from_name(cfg.scheme, cfg.alpha)
    try:
        report = experiment.moment_sweep(problem, scheme, cfg.n_list, cfg.trials, cfg.p, cfg.master_seed, cfg.workers)
    except ValueError as exc:
        if isinstance(exc, taming.SchemeUndefinedError):
            raise
        raise CliError("CONFIG", EXIT_CONFIG, str(exc)) from None
    _write(out, report.to_csv())
    for r in report.rows:
        flag = "" if r.reliable else f"  ({r.blowups} blow-ups)"
        print(f"  n={r.n:>8d} p={r.p:g}  E sup|X|^p = {r.estimate:.4g} +/- {r.ci:.2g}{flag}")
    print(f"wrote {out}")


def _run_diverge(cfg: RunConfig, problem: SdeProblem, out: Path) -> None:
    if cfg.deterministic:
        problem = problem.without_noise()
    report = experiment.divergence_demo(problem, cfg.n_list[0], cfg.x0, cfg.trials, cfg.master_seed, cfg.alpha)
    _write(out, report.to_csv())
    for r in report.rows:
        print(f"  {r.scheme:>8s}: blow-up fraction {r.blowup_fraction:.2f}, median |X(T)| {r.median_endpoint:.4g}")
    print(f"wrote {out}")


def _run_verify(cfg: RunConfig, problem: SdeProblem, out: Path) -> None:
    lines = ["check,n,region,pairs,max_violation,pass"]
    failed = []
    for n in cfg.n_list:
        td = taming.TamedDrift.build(problem, n, cfg.alpha)
        for report in (taming.verify_monotonicity(td, seed=cfg.master_seed), taming.verify_growth(td, seed=cfg.master_seed)):
            body = [ln for ln in report.to_csv().splitlines()[1:] if not ln.startswith("#")]
            lines += [f"{report.check},{n},{ln}" for ln in body]
            verdict = "pass" if report.passed else "FAIL"
            extra = f" [{report.note}]" if report.flagged else ""
            print(f"  n={n:>8d} s_n={td.s_n:.6g} {report.check:>12s}: worst {report.max_normalised:.3e} {verdict}{extra}")
            if not report.passed:
                failed.append((report.check, n))
    if problem.growth_consts is not None:
        sn = taming.sn_lower_bound_report(problem, cfg.alpha, cfg.n_list)
        for r in sn.rows:
            lines.append(f"# s_n n={r.n} s_n={r.s_n!r} ratio={r.ratio!r} status={r.status}")
    _write(out, "\n".join(lines) + "\n")
    print(f"wrote {out}")
    if failed:
        raise CliError("VERIFY_FAILED", EXIT_RUNTIME, f"checks failed: {failed}")


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    problem = _load_problem(cfg)
    out = cfg.out or Path(f"{cfg.command}.csv")
    try:
        if cfg.command in ("table", "rate"):
            _run_table(cfg, problem, out, fit=cfg.command == "rate")
        elif cfg.command == "moments":
            _run_moments(cfg, problem, out)
        elif cfg.command == "diverge":
            _run_diverge(cfg, problem, out)
        else:
            _run_verify(cfg, problem, out)
    except taming.SchemeUndefinedError as exc:
        raise CliError("SCHEME_UNDEFINED", EXIT_UNDEFINED, str(exc)) from None
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return run(config_from_args(args))
    except CliError as exc:
        message = " ".join(str(exc).split())
        print(f"tamesde: error[{exc.code}]: {message}", file=sys.stderr)
        return exc.status
    except OSError as exc:
        print(f"tamesde: error[IO]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
