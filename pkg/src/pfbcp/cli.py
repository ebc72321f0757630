"""Command-line entry point: ``pfbcp {simulate,convergence,presets,convert}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import (KEYS, OUTPUT_DIR_ENV, ConfigError, RunConfig, expand_runs, parse_config,
                     random_initial_field)
from .diagnostics import audit_step, run_ledger
from .driver import initial_state, make_stepper, steps_to_reach
from .fileio import EnergyLog, SnapshotError, snapshot_to_csv, write_snapshot
from .harness import (SweepSpec, experiment_presets, run_convergence, table1_spec, table2_spec,
                      table3_spec)
from .model import discrete_energy_cn, discrete_energy_ns
from .solvers import SolverBreakdown, StepRejected

log = logging.getLogger("pfbcp")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class SolverFailure(RuntimeError):
    pass


def _snapshot_schedule(config: RunConfig, n_steps: int) -> dict:
    schedule = {}
    for t in config.snapshot_times:
        schedule.setdefault(min(n_steps, int(round(t / config.dt))), []).append(t)
    return schedule


def _write_fields(outdir: Path, label: str, state, coupled: bool) -> None:
    stem = f"{label}_t{state.time:.6f}"
    write_snapshot(outdir / f"{stem}_phi.bcps", state.phi_n, state.time, "phi")
    if coupled:
        write_snapshot(outdir / f"{stem}_u.bcps", state.velocity_n[0], state.time, "u")
        write_snapshot(outdir / f"{stem}_v.bcps", state.velocity_n[1], state.time, "v")


def run_one(config: RunConfig) -> dict:
    """Integrate one configuration, writing snapshots, the energy log and a summary."""
    grid, params = config.grid, config.params
    coupled = config.scheme == "ns"
    outdir = Path(config.output_dir) / config.label
    outdir.mkdir(parents=True, exist_ok=True)

    state = initial_state(config.scheme, grid,
                          random_initial_field(grid, config.phi_mean, config.amplitude, config.seed))
    step = make_stepper(config.scheme, params, config.dt, tol=config.tol, max_iter=config.max_iter)
    n_steps = steps_to_reach(config.t_end, config.dt, strict=False)
    schedule = _snapshot_schedule(config, n_steps)
    diagnostics = []
    energy0 = (discrete_energy_ns(state, params, config.dt) if coupled
               else discrete_energy_cn(state, params))

    with EnergyLog(outdir / "energy.csv", coupled, config.log_stride) as elog:
        elog.write_row(state.time, energy0, grid.mean(state.phi_n))
        if 0 in schedule:
            _write_fields(outdir, config.label, state, coupled)
        for k in range(1, n_steps + 1):
            before = state
            try:
                out = step(state)
            except (StepRejected, SolverBreakdown, FloatingPointError) as exc:
                raise SolverFailure(f"{config.label}: step {k} at t={state.time:g} failed: {exc}")
            state = out.new_state
            diag = audit_step(before, out, params, config.dt)
            diagnostics.append(diag)
            elog.record(diag, force=k == n_steps)
            if k in schedule:
                _write_fields(outdir, config.label, state, coupled)
            if k % 1000 == 0:
                log.info("%s: t=%.4g E=%.6g", config.label, state.time, diag.energy)

    summary = run_ledger(diagnostics)
    lines = [f"label = {config.label}", f"scheme = {config.scheme}", f"steps = {summary.steps}",
             f"final_time = {state.time!r}",
             f"monotonicity_violations = {summary.monotonicity_violations}",
             f"max_identity_residual = {summary.max_identity_residual!r}",
             f"total_mass_drift = {summary.total_mass_drift!r}"]
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    return {"label": config.label, "summary": summary, "state": state}


def simulate(config: RunConfig) -> int:
    for run in expand_runs(config):
        result = run_one(run)
        s = result["summary"]
        print(f"{run.label}: {s.steps} steps, violations={s.monotonicity_violations}, "
              f"max residual={s.max_identity_residual:.3e}, mass drift={s.total_mass_drift:.3e}")
    return EXIT_OK


def sweep_spec(config: RunConfig) -> SweepSpec:
    params = config.params
    if config.sweep == "table1":
        base = table1_spec(config.scheme if config.scheme in ("cn", "bdf2") else "cn", config.n)
    elif config.sweep == "table2":
        base = table2_spec(config.n)
    elif config.sweep == "table3":
        base = table3_spec(config.scheme if config.scheme in ("cn", "bdf2") else "cn", config.n,
                           config.benchmark_dt)
    else:
        return SweepSpec(config.scheme, config.dts, config.t_end, config.n, params,
                         config.reference, config.benchmark_dt, config.tol, config.max_iter)
    return SweepSpec(base.scheme, config.dts or base.dts, base.t_end, config.n, params,
                     base.reference, base.benchmark_dt, base.tol, config.max_iter)


def write_convergence_csv(path: Path, spec: SweepSpec, rows) -> None:
    single = len(spec.columns) == 1
    header = ["dt"]
    for c in spec.columns:
        header += ["error", "order"] if single else [f"error_{c}", f"order_{c}"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            line = [repr(row.dt)]
            for c in spec.columns:
                order = row.orders[c]
                line += [repr(row.errors[c]), "" if order is None else f"{order:.4f}"]
            writer.writerow(line)


def convergence(config: RunConfig) -> int:
    try:
        spec = sweep_spec(config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = run_convergence(spec, workers=config.workers)
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    name = config.sweep or f"sweep_{spec.scheme}"
    path = outdir / f"{name}_{spec.scheme}.csv"
    write_convergence_csv(path, spec, rows)
    for row in rows:
        cells = "  ".join(f"{c}={row.errors[c]:.3e}" + ("" if row.orders[c] is None
                          else f" ({row.orders[c]:.2f})") for c in spec.columns)
        print(f"dt={row.dt:<12.6g} {cells}")
    print(f"wrote {path}")
    if any(r.failure for r in rows):
        return EXIT_SOLVER
    return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    group = parser.add_argument_group("configuration overrides")
    for key in KEYS:
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"set_{key}", metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfbcp", description="Phase-field block copolymer solver",
        epilog=f"The default output directory can be set with ${OUTPUT_DIR_ENV}.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_flags(sub.add_parser("simulate", help="run a simulation"))
    _add_config_flags(sub.add_parser("convergence", help="run a time-step convergence sweep"))
    sub.add_parser("presets", help="list experiment presets")
    conv = sub.add_parser("convert", help="convert a snapshot to CSV")
    conv.add_argument("snapshot", type=Path)
    conv.add_argument("output", type=Path, nargs="?")
    return parser


def _load_config(args, mode: str) -> RunConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("set_") and v is not None}
    return parse_config(text, overrides, mode)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            for name, preset in experiment_presets().items():
                print(f"{name:7s} t_end={preset.t_end():<6g} (full {preset.full_t_end:g})  "
                      f"{preset.description}")
            return EXIT_OK
        if args.command == "convert":
            out = args.output or args.snapshot.with_suffix(".csv")
            print(snapshot_to_csv(args.snapshot, out))
            return EXIT_OK
        config = _load_config(args, args.command)
        return simulate(config) if args.command == "simulate" else convergence(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, SnapshotError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
