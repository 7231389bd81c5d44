"""Command-line front end: ``ghztomo {simulate,reconstruct,analyze,dip}``.

Settings come from defaults, then an optional JSON config file, then flags.
Every output file starts with a comment header recording the resolved
configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis, reconstruct, source, tomo
from .errors import DataError, TomographyError
from .qlin import GHZ, DensityMatrix, depolarized

log = logging.getLogger("ghztomo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    preset: str = "ghz"
    flux: float = 1e5
    seed: int = 0
    duration: float = 900.0
    background_rate: float = 0.0
    trigger_singles: int = 0
    noiseless: bool = False
    input: str | None = None
    output: str | None = None
    counts: str | None = None
    method: str = "mle"
    objective: str = "poisson"
    normalize: bool = False
    restarts: int = 5
    analysis_restarts: int = analysis.DEFAULT_RESTARTS
    trials: int = 0
    epsilon0: float = 0.69
    width: float = 60.0
    span: float = 300.0
    n_positions: int = 41
    events: float = 2000.0

    def validate(self, command: str) -> None:
        if not self.flux > 0:
            raise ConfigError("flux must be positive")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.background_rate < 0:
            raise ConfigError("background_rate must be nonnegative")
        if self.trigger_singles < 0:
            raise ConfigError("trigger_singles must be nonnegative")
        if self.method not in ("mle", "linear"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.objective not in ("poisson", "gaussian"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.restarts < 0 or self.analysis_restarts < 1:
            raise ConfigError("restarts out of range")
        if self.trials < 0 or self.trials == 1:
            raise ConfigError("trials must be 0 (off) or at least 2")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ConfigError("epsilon0 must lie in [0, 1]")
        if not (self.width > 0 and self.span > 0 and self.events > 0):
            raise ConfigError("dip width, span and events must be positive")
        if command in ("reconstruct", "analyze") and not self.input:
            raise ConfigError(f"{command} needs --input")
        if command == "analyze" and self.trials and not self.counts:
            raise ConfigError("Monte Carlo (--trials) needs the companion --counts file")
        parse_preset(self.preset)


CONFIG_KEYS = {f.name for f in fields(RunConfig)}

COMMAND_KEYS = {
    "simulate": ["preset", "flux", "seed", "duration", "background_rate", "trigger_singles",
                 "noiseless", "analysis_restarts", "output"],
    "reconstruct": ["input", "method", "objective", "normalize", "restarts", "seed", "output"],
    "analyze": ["input", "counts", "trials", "restarts", "analysis_restarts", "seed", "output"],
    "dip": ["epsilon0", "width", "span", "n_positions", "events", "seed", "output"],
}


def parse_preset(preset: str) -> tuple[str, float | str | None]:
    if preset == "ghz":
        return "ghz", None
    kind, sep, arg = preset.partition(":")
    if kind == "werner" and sep:
        try:
            p = float(arg)
        except ValueError:
            raise ConfigError(f"bad werner weight in {preset!r}") from None
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"werner weight {p} outside [0, 1]")
        return "werner", p
    if kind == "file" and arg:
        return "file", arg
    raise ConfigError(f"unknown state preset {preset!r} (use ghz, werner:p or file:PATH)")


def preset_state(preset: str) -> DensityMatrix:
    kind, arg = parse_preset(preset)
    if kind == "ghz":
        return GHZ.density_matrix()
    if kind == "werner":
        return depolarized(GHZ, arg)
    path = Path(arg)
    if not path.is_file():
        raise DataError(f"state file {path} not found")
    return reconstruct.parse_result(path.read_text()).rho


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(command: str, file_values: dict, flag_values: dict) -> RunConfig:
    cfg = RunConfig()
    for src in (file_values, flag_values):
        for key, val in src.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            default = getattr(RunConfig(), key)
            if isinstance(default, bool) and not isinstance(val, bool):
                raise ConfigError(f"{key} must be true or false")
            if isinstance(default, int) and not isinstance(default, bool):
                if isinstance(val, bool) or float(val) != int(val):
                    raise ConfigError(f"{key} must be an integer")
                val = int(val)
            elif isinstance(default, float):
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ConfigError(f"{key} must be a number")
                val = float(val)
            setattr(cfg, key, val)
    cfg.validate(command)
    return cfg


def header(command: str, cfg: RunConfig) -> list[str]:
    d = asdict(cfg)
    used = {k: d[k] for k in COMMAND_KEYS[command]}
    return [f"ghztomo {command}", "config: " + json.dumps(used, sort_keys=True)]


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


# --- commands ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> tomo.TomographySet:
    rho = preset_state(cfg.preset)
    if cfg.noiseless:
        tset = tomo.expected_counts_set(rho, cfg.flux, cfg.duration)
        if cfg.background_rate > 0:
            tset = tomo.apply_background(tset, tomo.BackgroundModel(cfg.background_rate))
    else:
        bg = tomo.BackgroundModel(cfg.background_rate) if cfg.background_rate > 0 else None
        tset = tomo.simulate_counts(
            rho, cfg.flux, cfg.seed, cfg.duration, cfg.trigger_singles, background=bg
        )
    _write(cfg.output, tomo.format_table(tset, header("simulate", cfg)))
    truth = analysis.full_report(rho, cfg.analysis_restarts, cfg.seed)
    echo = sys.stdout if cfg.output is not None else sys.stderr
    for key, val in truth.scalars().items():
        print(f"true_{key} = {val:.6g}", file=echo)
    return tset


def cmd_reconstruct(cfg: RunConfig) -> reconstruct.ReconstructionResult:
    tset = tomo.parse_table(_read(cfg.input))
    if cfg.normalize:
        tset = tomo.normalize_by_trigger(tset)
    if cfg.method == "linear":
        res = reconstruct.linear_invert(tset)
    else:
        res = reconstruct.mle_reconstruct(
            tset, restarts=cfg.restarts, seed=cfg.seed, objective=cfg.objective
        )
    _write(cfg.output, reconstruct.format_result(res, header("reconstruct", cfg)))
    if cfg.output is not None:
        print(f"fidelity = {analysis.ghz_fidelity(res.rho):.6g}")
        print(f"converged = {str(res.converged).lower()}")
        print(f"physical = {str(res.physical).lower()}")
    return res


def cmd_analyze(cfg: RunConfig) -> analysis.AnalysisReport:
    res = reconstruct.parse_result(_read(cfg.input))
    if not res.physical:
        raise DataError("reconstructed matrix is unphysical; analysis needs a positive state")
    report = analysis.full_report(res.rho, cfg.analysis_restarts, cfg.seed)
    if cfg.trials:
        tset = tomo.parse_table(_read(cfg.counts))
        qs = analysis.report_quantities(report, seed=cfg.seed)
        summary = reconstruct.monte_carlo(tset, cfg.trials, cfg.seed, qs, restarts=0)
        report = analysis.with_uncertainties(report, summary)
    text = analysis.format_report(report, header("analyze", cfg))
    _write(cfg.output, text)
    if cfg.output is not None:
        sys.stdout.write(text)
    return report


def cmd_dip(cfg: RunConfig) -> source.DipFit:
    if cfg.n_positions < 5:
        raise DataError(f"need at least 5 positions, got {cfg.n_positions}")
    dip = source.DipConfig(
        epsilon0=cfg.epsilon0,
        width=cfg.width,
        positions=tuple(np.linspace(-cfg.span, cfg.span, cfg.n_positions)),
        events_per_point=cfg.events,
    )
    curve = source.dip_curve(dip, cfg.seed)
    fit = source.fit_dip(*zip(*curve))
    lines = [f"# {h}" for h in header("dip", cfg)]
    lines += [
        f"fitted_visibility = {fit.visibility:.6g}",
        f"fitted_visibility_err = {fit.visibility_err:.6g}",
        f"fitted_center_um = {fit.center:.6g}",
        f"fitted_width_um = {fit.width:.6g}",
        "position_um count",
    ]
    lines += [f"{x:.6g} {c}" for x, c in curve]
    _write(cfg.output, "\n".join(lines) + "\n")
    if cfg.output is not None:
        print(f"fitted_visibility = {fit.visibility:.6g} +/- {fit.visibility_err:.2g}")
    return fit


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "analyze": cmd_analyze,
    "dip": cmd_dip,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="ghztomo", description="Three-photon GHZ state tomography.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("-o", "--output", default=S, help="output file (default: stdout)")

    p = sub.add_parser("simulate", help="simulate a 64-setting count table")
    common(p)
    p.add_argument("--preset", default=S, help="ghz | werner:P | file:PATH")
    p.add_argument("--flux", type=float, default=S)
    p.add_argument("--duration", type=float, default=S)
    p.add_argument("--background-rate", dest="background_rate", type=float, default=S)
    p.add_argument("--trigger-singles", dest="trigger_singles", type=int, default=S)
    p.add_argument("--noiseless", action="store_const", const=True, default=S)
    p.add_argument("--analysis-restarts", dest="analysis_restarts", type=int, default=S)

    p = sub.add_parser("reconstruct", help="reconstruct the density matrix")
    common(p)
    p.add_argument("-i", "--input", default=S)
    p.add_argument("--method", choices=["mle", "linear"], default=S)
    p.add_argument("--objective", choices=["poisson", "gaussian"], default=S)
    p.add_argument("--normalize", action="store_const", const=True, default=S)
    p.add_argument("--restarts", type=int, default=S)

    p = sub.add_parser("analyze", help="fidelity, witness, Mermin and concurrence report")
    common(p)
    p.add_argument("-i", "--input", default=S, help="reconstruction file")
    p.add_argument("--counts", default=S, help="count table for Monte Carlo errors")
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--restarts", type=int, default=S)
    p.add_argument("--analysis-restarts", dest="analysis_restarts", type=int, default=S)

    p = sub.add_parser("dip", help="simulate and fit the four-fold interference dip")
    common(p)
    p.add_argument("--epsilon0", type=float, default=S)
    p.add_argument("--width", type=float, default=S)
    p.add_argument("--span", type=float, default=S)
    p.add_argument("--n-positions", dest="n_positions", type=int, default=S)
    p.add_argument("--events", type=float, default=S)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING)
    config_path = args.pop("config", None)
    try:
        cfg = resolve_config(command, load_config(config_path), args)
    except ConfigError as exc:
        print(f"ghztomo: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"ghztomo: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TomographyError as exc:
        print(f"ghztomo: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if isinstance(result, reconstruct.ReconstructionResult) and not result.converged:
        print("ghztomo: reconstruction did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
