"""Command-line pipeline for the full workflow.

Subcommands: ``simulate-abm`` (agent-based run), ``polarization``
(trajectory to order-parameter series), ``fit`` (likelihood training),
``simulate-sde`` (Euler-Maruyama runs of fitted or closed-form models),
``validate`` (goodness-of-fit report), and ``fields`` (SVG/CSV field
export).

Every subcommand accepts ``--config FILE`` with ``key = value`` lines
(flags override the file) and a single ``--seed`` from which all
stage-specific random streams are derived, so pipelines compose
reproducibly. Exit codes: 0 success, 2 usage or validation, 3 I/O
failure, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import sys
from types import SimpleNamespace

import numpy as np

from ._util import derive_seed
from .abm import ModelParams, save_heading_csv, simulate_abm
from .analytic_sde import KINDS, AnalyticSde
from .estimator import (
    DataInsufficiencyError,
    TrainConfig,
    load_model,
    save_model,
    train,
)
from .fields import RenderOptions, eval_fields, render_svg, write_field_csv
from .metrics import acf, default_max_lag, fit_report
from .order_parameter import (
    load_polarization_csv,
    load_trajectory_csv,
    save_polarization_csv,
    series_from_trajectory,
)
from .sde_simulate import SimConfig, simulate_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4

# stage ids for per-subcommand random streams derived from --seed
_STREAM_ABM = 1
_STREAM_FIT = 2
_STREAM_SIM = 3
_STREAM_VALIDATE = 4

_UNSET = object()


class UsageError(Exception):
    """Bad flags or config values; maps to exit code 2."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_point(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


class _Command:
    """One subcommand: option registry plus config-file merging."""

    def __init__(self, subparsers, name: str, help_text: str):
        self.name = name
        self.parser = subparsers.add_parser(name, help=help_text)
        self.parser.add_argument(
            "--config",
            default=None,
            metavar="FILE",
            help="key = value defaults; explicit flags win",
        )
        self.types: dict[str, object] = {}
        self.defaults: dict[str, object] = {}
        self.required: set[str] = set()

    def opt(self, flag, type=str, default=None, required=False, help="", switch=False):
        dest = flag.lstrip("-").replace("-", "_")
        if switch:
            self.parser.add_argument(
                flag, dest=dest, action="store_const", const=True,
                default=_UNSET, help=help,
            )
            self.types[dest] = _parse_bool
            self.defaults[dest] = False
        else:
            self.parser.add_argument(
                flag, dest=dest, default=_UNSET, metavar=dest.upper(), help=help
            )
            self.types[dest] = type
            self.defaults[dest] = default
        if required:
            self.required.add(dest)
        return self

    def resolve(self, args: argparse.Namespace) -> SimpleNamespace:
        """Merge flags > config file > defaults, with type conversion."""
        cfg = _load_config(args.config) if args.config else {}
        unknown = sorted(set(cfg) - set(self.types))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        out = {}
        for dest, typ in self.types.items():
            raw = getattr(args, dest)
            if raw is _UNSET:
                if dest in cfg:
                    raw = cfg[dest]
                elif dest in self.required:
                    flag = "--" + dest.replace("_", "-")
                    raise UsageError(f"missing required option {flag}")
                else:
                    out[dest] = self.defaults[dest]
                    continue
            if isinstance(raw, str):
                try:
                    raw = typ(raw)
                except ValueError as exc:
                    raise UsageError(f"bad value for --{dest.replace('_', '-')}: {exc}")
            out[dest] = raw
        return SimpleNamespace(**out)


def _load_config(path: str) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected key = value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _abm_params(ns) -> ModelParams:
    try:
        return ModelParams(ns.n, ns.r1, ns.r2, ns.r3)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate_abm(ns) -> int:
    traj = simulate_abm(
        _abm_params(ns), ns.t_end, ns.sample_dt, seed=derive_seed(ns.seed, _STREAM_ABM)
    )
    save_heading_csv(ns.out, traj)
    series = series_from_trajectory(traj)
    c = traj.event_counts
    print(
        f"wrote {ns.out}: {traj.n_frames} frames x {traj.n_agents} agents; "
        f"{sum(c)} events (turn/pairwise/ternary = {c[0]}/{c[1]}/{c[2]}); "
        f"mean |m| = {series.norms().mean():.4f}"
    )
    return EXIT_OK


def cmd_polarization(ns) -> int:
    frames = load_trajectory_csv(ns.traj)
    series = series_from_trajectory(frames).drop_initial(ns.burn_in)
    save_polarization_csv(ns.out, series)
    print(
        f"wrote {ns.out}: {len(series)} samples at dt = {series.dt:g} "
        f"(burn-in fraction {ns.burn_in:g}; {series.n_dropped} invalid frames dropped)"
    )
    return EXIT_OK


def cmd_fit(ns) -> int:
    series = load_polarization_csv(ns.series)
    config = TrainConfig(
        batch_size=ns.batch_size,
        train_fraction=ns.train_fraction,
        max_epochs=ns.epochs,
        patience=ns.patience,
        seed=derive_seed(ns.seed, _STREAM_FIT),
        augment=not ns.no_augment,
        learning_rate=ns.learning_rate,
        hidden_layers=ns.hidden_layers,
        hidden_width=ns.hidden_width,
        steps_per_epoch=ns.steps_per_epoch or None,
    )
    model, report = train(series, config)
    save_model(ns.out, model)
    if ns.report:
        report.to_csv(ns.report)
    print(
        f"transition pairs: {report.n_train_pairs} train + {report.n_val_pairs} val "
        f"(augmentation {'on' if config.augment else 'off'})"
    )
    print(
        f"wrote {ns.out}: best epoch {report.best_epoch} of {len(report.epochs)}, "
        f"val NLL {report.best_val_nll:.6f}"
    )
    return EXIT_OK


def _load_any_model(ns, default_dt: float = 0.12):
    if getattr(ns, "model", None):
        model = load_model(ns.model)
        return model, model.dt
    if getattr(ns, "analytic", None):
        if ns.analytic not in KINDS:
            raise UsageError(
                f"invalid analytic kind {ns.analytic!r}; choose from {', '.join(KINDS)}"
            )
        try:
            sde = AnalyticSde(ns.analytic, _abm_params(ns))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return sde, default_dt
    raise UsageError("need either --model or --analytic")


def cmd_simulate_sde(ns) -> int:
    model, model_dt = _load_any_model(ns)
    config = SimConfig(
        dt=ns.dt if ns.dt else model_dt,
        n_steps=ns.n_steps,
        m0=ns.m0,
        seed=derive_seed(ns.seed, _STREAM_SIM),
        boundary=not ns.no_boundary,
        substeps=ns.substeps,
    )
    series = simulate_model(model, config)
    save_polarization_csv(ns.out, series)
    print(
        f"wrote {ns.out}: {len(series)} samples at dt = {config.dt:g}, "
        f"mean |m| = {series.norms().mean():.4f}"
    )
    return EXIT_OK


def cmd_validate(ns) -> int:
    reference = load_polarization_csv(ns.reference)
    if ns.against_self:
        sim = reference
    else:
        if not ns.model:
            raise UsageError("need --model (or --against-self)")
        model = load_model(ns.model)
        config = SimConfig(
            dt=reference.dt,
            n_steps=len(reference) - 1,
            m0=tuple(reference.m[0]),
            seed=derive_seed(ns.seed, _STREAM_VALIDATE),
            boundary=True,
            substeps=ns.substeps,
        )
        sim = simulate_model(model, config)
    report = fit_report(reference, sim)
    report.to_csv(ns.out)
    if ns.hist_out:
        _write_histogram_csv(ns.hist_out, reference.norms(), sim.norms(), ns.bins)
    if ns.acf_out:
        _write_acf_csv(ns.acf_out, reference, sim)
    print(
        f"wrote {ns.out}: w1 = {report.w1:.6f}, tau_real = {report.tau_real:.4f}, "
        f"tau_sim = {report.tau_sim:.4f}, t_rel = {report.t_rel:.4f}"
    )
    return EXIT_OK


def _write_histogram_csv(path, real_norms, sim_norms, bins: int) -> None:
    hi = max(1.0, float(real_norms.max()), float(sim_norms.max()))
    edges = np.linspace(0.0, hi, bins + 1)
    dens_real, _ = np.histogram(real_norms, bins=edges, density=True)
    dens_sim, _ = np.histogram(sim_norms, bins=edges, density=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("bin_left,bin_right,density_real,density_sim\n")
        for i in range(bins):
            f.write(
                f"{edges[i]:.9g},{edges[i + 1]:.9g},"
                f"{dens_real[i]:.9g},{dens_sim[i]:.9g}\n"
            )


def _write_acf_csv(path, reference, sim) -> None:
    lags = min(default_max_lag(len(reference)), default_max_lag(len(sim)))
    acf_real = acf(reference.norms(), lags)
    acf_sim = acf(sim.norms(), lags)
    with open(path, "w", encoding="utf-8") as f:
        f.write("lag_time,acf_real,acf_sim\n")
        for k in range(lags + 1):
            f.write(
                f"{k * reference.dt:.9g},{acf_real[k]:.9g},{acf_sim[k]:.9g}\n"
            )


def cmd_fields(ns) -> int:
    model, _ = _load_any_model(ns)
    try:
        grid = eval_fields(model, resolution=ns.resolution)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    drift_path = f"{ns.out_prefix}_drift.svg"
    diff_path = f"{ns.out_prefix}_diffusion.svg"
    csv_path = f"{ns.out_prefix}_fields.csv"
    with open(drift_path, "w", encoding="utf-8") as f:
        f.write(
            render_svg(
                grid,
                RenderOptions(kind="drift", colormap=ns.colormap, title=ns.title),
            )
        )
    with open(diff_path, "w", encoding="utf-8") as f:
        f.write(
            render_svg(
                grid,
                RenderOptions(kind="diffusion", colormap=ns.colormap, title=ns.title),
            )
        )
    write_field_csv(csv_path, grid)
    print(f"wrote {drift_path}, {diff_path}, {csv_path} ({len(grid)} grid points)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_model_source(cmd: _Command) -> None:
    cmd.opt("--model", help="fitted model file")
    cmd.opt("--analytic", help="closed-form model kind: pairwise or ternary")
    cmd.opt("--n", type=int, default=30, help="agent count for --analytic")
    cmd.opt("--r1", type=float, default=0.0)
    cmd.opt("--r2", type=float, default=0.0)
    cmd.opt("--r3", type=float, default=0.0)


def build_commands() -> tuple[argparse.ArgumentParser, dict[str, tuple[_Command, object]]]:
    parser = argparse.ArgumentParser(
        prog="mesosde",
        description="Discover and validate drift-diffusion models of group polarization.",
    )
    subparsers = parser.add_subparsers(dest="command")
    table: dict[str, tuple[_Command, object]] = {}

    cmd = _Command(subparsers, "simulate-abm", "run the agent-based flocking model")
    cmd.opt("--n", type=int, required=True, help="agent count")
    cmd.opt("--r1", type=float, default=0.0, help="spontaneous turn rate")
    cmd.opt("--r2", type=float, default=0.0, help="pairwise copy rate")
    cmd.opt("--r3", type=float, default=0.0, help="ternary copy rate")
    cmd.opt("--t-end", type=float, required=True, help="simulated time span")
    cmd.opt("--sample-dt", type=float, default=0.12, help="snapshot interval")
    cmd.opt("--seed", type=int, default=0)
    cmd.opt("--out", required=True, help="output heading CSV")
    table["simulate-abm"] = (cmd, cmd_simulate_abm)

    cmd = _Command(subparsers, "polarization", "trajectory CSV -> polarization CSV")
    cmd.opt("--traj", required=True, help="heading or velocity trajectory CSV")
    cmd.opt("--burn-in", type=float, default=0.1, help="initial fraction to discard")
    cmd.opt("--out", required=True, help="output polarization CSV")
    table["polarization"] = (cmd, cmd_polarization)

    cmd = _Command(subparsers, "fit", "train the neural drift-diffusion model")
    cmd.opt("--series", required=True, help="polarization CSV")
    cmd.opt("--out", required=True, help="output model file")
    cmd.opt("--report", help="training report CSV")
    cmd.opt("--batch-size", type=int, default=512)
    cmd.opt("--train-fraction", type=float, default=0.9)
    cmd.opt("--epochs", type=int, default=200, help="maximum epochs")
    cmd.opt("--patience", type=int, default=20)
    cmd.opt("--learning-rate", type=float, default=1e-3)
    cmd.opt("--hidden-layers", type=int, default=5)
    cmd.opt("--hidden-width", type=int, default=150)
    cmd.opt("--steps-per-epoch", type=int, default=0, help="0 = full pass")
    cmd.opt("--no-augment", switch=True, help="disable symmetry augmentation")
    cmd.opt("--seed", type=int, default=0)
    table["fit"] = (cmd, cmd_fit)

    cmd = _Command(subparsers, "simulate-sde", "Euler-Maruyama run of a model")
    _add_model_source(cmd)
    cmd.opt("--n-steps", type=int, required=True)
    cmd.opt("--dt", type=float, default=0.0, help="0 = model dt (0.12 for --analytic)")
    cmd.opt("--m0", type=_parse_point, default=(0.0, 0.0), help="start state 'x,y'")
    cmd.opt("--substeps", type=int, default=1, help="internal sub-stepping factor")
    cmd.opt("--no-boundary", switch=True, help="disable the unit-disc boundary policy")
    cmd.opt("--seed", type=int, default=0)
    cmd.opt("--out", required=True, help="output polarization CSV")
    table["simulate-sde"] = (cmd, cmd_simulate_sde)

    cmd = _Command(subparsers, "validate", "goodness-of-fit of a model vs a reference")
    cmd.opt("--model", help="fitted model file")
    cmd.opt("--reference", required=True, help="reference polarization CSV")
    cmd.opt("--out", required=True, help="output fit-report CSV")
    cmd.opt("--hist-out", help="|m| histogram CSV for plotting")
    cmd.opt("--acf-out", help="ACF comparison CSV for plotting")
    cmd.opt("--bins", type=int, default=40)
    cmd.opt("--substeps", type=int, default=1)
    cmd.opt("--against-self", switch=True, help="debug: compare reference to itself")
    cmd.opt("--seed", type=int, default=0)
    table["validate"] = (cmd, cmd_validate)

    cmd = _Command(subparsers, "fields", "export drift/diffusion fields as SVG + CSV")
    _add_model_source(cmd)
    cmd.opt("--resolution", type=int, default=21, help="lattice resolution per axis")
    cmd.opt("--colormap", default="viridis", help="viridis or gray")
    cmd.opt("--title", help="figure title")
    cmd.opt("--out-prefix", required=True, help="prefix for the three output files")
    table["fields"] = (cmd, cmd_fields)

    return parser, table


def main(argv=None) -> int:
    parser, table = build_commands()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    cmd, func = table[args.command]
    try:
        ns = cmd.resolve(args)
        return func(ns)
    except DataInsufficiencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
