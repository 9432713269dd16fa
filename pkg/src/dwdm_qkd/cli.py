"""Command-line entry point.

Subcommands: ``simulate``, ``analyze``, ``scan``, ``calibrate``, ``pmd``,
``tuning``, ``report``.  All outputs are CSV (or TOML parameter blocks);
every file-emitting run writes a ``manifest.json`` with content hashes so it
can be reproduced exactly.  Warnings go to stderr and never change the exit
status; errors exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AnalysisError,
    metrics_csv_lines,
    resolve_peak_spec,
    run_report_row,
)
from .config import ConfigError, RunConfig, load_calibration_inputs, load_run_config
from .keyrate import DEFAULT_F_EC
from .linkmodel import (
    CalibrationError,
    calibrate,
    distance_scan,
    get_scenario,
    max_distance,
    scan_csv_lines,
)
from .photonics import IndexModel, PmdParams, pmd_visibility_ceiling, tuning_curves
from .simulator import HistogramFormatError, SimConfig, read_run, simulate_run, write_run


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path,
    subcommand: str,
    config_path: str | None,
    seed: int | None,
    files: list[Path],
    extra: dict | None = None,
) -> Path:
    manifest = {
        "tool": "dwdm-qkd",
        "version": __version__,
        "subcommand": subcommand,
        "config_path": config_path,
        "config_sha256": _sha256(Path(config_path)) if config_path else None,
        "seed": seed,
        "out_dir": str(out_dir),
        "files": {
            str(p.relative_to(out_dir)): _sha256(p) for p in sorted(files)
        },
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _emit(lines: list[str], out_dir: str | None, filename: str, subcommand: str,
          config_path: str | None = None, seed: int | None = None,
          extra: dict | None = None) -> None:
    text = "\n".join(lines) + "\n"
    if out_dir is None:
        sys.stdout.write(text)
        return
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / filename
    target.write_text(text, encoding="utf-8")
    _write_manifest(directory, subcommand, config_path, seed, [target], extra)
    print(str(target))


def _derived_seed(master: int, pair_index: int, distance_index: int) -> int:
    sequence = np.random.SeedSequence(entropy=int(master), spawn_key=(pair_index, distance_index))
    return int(sequence.generate_state(1, np.uint64)[0])


def _run_dir_name(alice: int, bob: int, total_km: float) -> str:
    return f"ch{alice}-{bob}_L{total_km:g}km"


def cmd_simulate(args) -> int:
    if not args.config:
        raise ConfigError("simulate requires --config")
    if not args.out:
        raise ConfigError("simulate requires --out")
    cfg = load_run_config(args.config)
    master_seed = args.seed if args.seed is not None else cfg.sim.seed
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    emitted: list[Path] = []
    for pair_index, (alice, bob) in enumerate(cfg.plan.user_pairs):
        for distance_index, arm_km in enumerate(cfg.sim.arm_lengths_km):
            run_seed = _derived_seed(master_seed, pair_index, distance_index)
            sim_cfg = SimConfig(
                source=cfg.source,
                link_alice=cfg.link.with_arm_length(arm_km),
                link_bob=cfg.link.with_arm_length(arm_km),
                duration_s=cfg.sim.duration_s,
                seed=run_seed,
                alice_channel=alice.number,
                bob_channel=bob.number,
                bell_sign=cfg.sim.bell_sign,
                bin_width_ps=cfg.sim.bin_width_ps,
                jitter_sigma_ps=cfg.sim.jitter_sigma_ps,
                peak_window_bins=cfg.sim.peak_window_bins,
                n_bins=cfg.sim.n_bins,
            )
            run = simulate_run(sim_cfg)
            run_dir = out_root / _run_dir_name(alice.number, bob.number, 2.0 * arm_km)
            emitted.extend(write_run(run, run_dir))
            print(f"{run_dir}: 8 settings, seed {run_seed}")
    _write_manifest(out_root, "simulate", str(args.config), master_seed, emitted)
    return 0


def _analysis_f_ec(args, cfg: RunConfig | None) -> float:
    if args.f_ec is not None:
        return args.f_ec
    if cfg is not None:
        return cfg.analysis.f_ec
    return DEFAULT_F_EC


def cmd_analyze(args) -> int:
    cfg = load_run_config(args.config) if args.config else None
    f_ec = _analysis_f_ec(args, cfg)
    peak_bins = args.peak_window_bins or (cfg.analysis.peak_window_bins if cfg else None)
    run = read_run(args.run_dir)
    spec = resolve_peak_spec(run, peak_window_bins=peak_bins)
    row = run_report_row(run, spec, f_ec)
    _emit(
        metrics_csv_lines([row]),
        args.out,
        "metrics.csv",
        "analyze",
        config_path=args.config,
        extra={"run_dir": str(args.run_dir), "f_ec": f_ec},
    )
    return 0


def cmd_report(args) -> int:
    cfg = load_run_config(args.config) if args.config else None
    f_ec = _analysis_f_ec(args, cfg)
    peak_bins = args.peak_window_bins or (cfg.analysis.peak_window_bins if cfg else None)
    root = Path(args.root)
    run_dirs = sorted({p.parent for p in root.rglob("hist_00.csv")})
    if not run_dirs:
        raise AnalysisError(f"{root}: no histogram runs found")
    rows = []
    for run_dir in run_dirs:
        run = read_run(run_dir)
        spec = resolve_peak_spec(run, peak_window_bins=peak_bins)
        rows.append(run_report_row(run, spec, f_ec))
    rows.sort(key=lambda r: (r[0], r[1]))
    _emit(
        metrics_csv_lines(rows),
        args.out,
        "report.csv",
        "report",
        config_path=args.config,
        extra={"root": str(root), "f_ec": f_ec, "runs": len(rows)},
    )
    return 0


def cmd_scan(args) -> int:
    scenario = get_scenario(args.scenario)
    f_ec = args.f_ec if args.f_ec is not None else scenario.f_ec
    if args.points < 1:
        raise ConfigError("--points must be >= 1")
    if args.stop_km < args.start_km:
        raise ConfigError("--stop-km must be >= --start-km")
    totals = np.linspace(args.start_km, args.stop_km, args.points)
    predictions = distance_scan(
        scenario.source, scenario.link, f_ec, [float(t) / 2.0 for t in totals]
    )
    try:
        cutoff = max_distance(scenario.source, scenario.link, f_ec)
    except ValueError as exc:
        raise CalibrationError(f"scenario {scenario.name!r}: {exc}") from exc
    metadata = {
        "scenario": scenario.name,
        "f_ec": f_ec,
        "cutoff_total_km": f"{cutoff:.1f}" if cutoff != float("inf") else "inf",
    }
    _emit(
        scan_csv_lines(predictions, metadata),
        args.out,
        "scan.csv",
        "scan",
        extra=metadata,
    )
    return 0


def cmd_calibrate(args) -> int:
    if not args.config:
        raise ConfigError("calibrate requires --config (link and source parameters)")
    cfg = load_run_config(args.config)
    measured = load_calibration_inputs(args.measured)
    result = calibrate(measured, cfg.link, cfg.source.f_rep_hz, cfg.source.noise_prob)

    warnings = list(result.warnings)
    if cfg.pmd is not None:
        ceiling = pmd_visibility_ceiling(cfg.pmd)
        if measured.v_tot_0km > ceiling.v_max:
            warnings.append(
                f"measured visibility {measured.v_tot_0km:.3f} exceeds the PMD "
                f"ceiling {ceiling.v_max:.3f}"
            )
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)

    lines = [f"# warning: {w}" for w in warnings]
    lines += [
        "# calibrated source parameters",
        "",
        "[source]",
        f"mu = {result.mu!r}",
        f"f_rep_hz = {cfg.source.f_rep_hz!r}",
        f"noise_prob = {cfg.source.noise_prob!r}",
        f"polarization_error = {result.b!r}",
        "",
        "[uncertainty]",
        f"mu_sigma = {result.mu_sigma!r}",
        f"polarization_error_sigma = {result.b_sigma!r}",
        f"far_mu_ratio = {result.far_mu_ratio!r}",
        f"r_false_ratio = {result.r_false_ratio!r}",
    ]
    _emit(
        lines,
        args.out,
        "calibrated_source.toml",
        "calibrate",
        config_path=args.config,
        extra={"measured_path": str(args.measured)},
    )
    return 0


def cmd_pmd(args) -> int:
    cfg = load_run_config(args.config) if args.config else None
    if cfg is not None and cfg.pmd is not None:
        params = cfg.pmd
    else:
        if args.wavelength_nm is None or args.fiber_length_m is None or args.beat_length_mm is None:
            raise ConfigError(
                "pmd needs --wavelength-nm, --fiber-length-m and --beat-length-mm "
                "(or a config with a [pmd] section)"
            )
        params = PmdParams(
            fiber_length_m=args.fiber_length_m,
            beat_length_m=args.beat_length_mm * 1e-3,
            wavelength_m=args.wavelength_nm * 1e-9,
            channel_bandwidth_hz=args.bandwidth_ghz * 1e9,
        )
    result = pmd_visibility_ceiling(params)
    lines = [
        "tau_pmd_ps,overlap,v_max",
        f"{result.tau_pmd_ps!r},{result.overlap!r},{result.v_max!r}",
    ]
    _emit(lines, args.out, "pmd.csv", "pmd", config_path=args.config)
    return 0


def cmd_tuning(args) -> int:
    cfg = load_run_config(args.config) if args.config else None
    if cfg is not None and cfg.tuning is not None:
        t = cfg.tuning
        model_path = t["model_path"]
        pump_start, pump_stop = t["pump_start_nm"], t["pump_stop_nm"]
        pump_points = t["pump_points"]
        band = (t["band_lo_nm"], t["band_hi_nm"])
        grid_points = t["grid_points"]
    else:
        if args.model is None or args.pump_start_nm is None or args.band_nm is None:
            raise ConfigError(
                "tuning needs --model, --pump-start-nm and --band-nm LO HI "
                "(or a config with a [tuning] section)"
            )
        model_path = args.model
        pump_start = args.pump_start_nm
        pump_stop = args.pump_stop_nm if args.pump_stop_nm is not None else pump_start
        pump_points = args.pump_points
        band = tuple(args.band_nm)
        grid_points = args.grid_points
    model = IndexModel.from_toml(model_path)
    lines = ["pump_nm,lambda_a_nm,lambda_b_nm,branch"]
    for pump_nm in np.linspace(pump_start, pump_stop, pump_points):
        for solution in tuning_curves(model, float(pump_nm), band, grid_points=grid_points):
            lines.append(
                f"{float(pump_nm)!r},{solution.lambda_a_nm!r},"
                f"{solution.lambda_b_nm!r},{solution.branch}"
            )
    _emit(lines, args.out, "tuning.csv", "tuning", config_path=args.config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dwdm-qkd",
        description=(
            "Simulate and analyze multi-user entanglement-based QKD over a "
            "wavelength-multiplexed fiber network."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run configuration file (TOML)")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=None, help="master seed override")
    common.add_argument("--f-ec", type=float, default=None, help="error-correction inefficiency override")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the Monte Carlo simulator")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="reduce one histogram run to metrics")
    p.add_argument("run_dir", help="directory with the 8 histogram CSVs")
    p.add_argument("--peak-window-bins", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", parents=[common], help="tabulate metrics for many runs")
    p.add_argument("root", help="directory tree containing histogram runs")
    p.add_argument("--peak-window-bins", type=int, default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("scan", parents=[common], help="rate vs distance for a scenario")
    p.add_argument("--scenario", required=True, help="builtin name or scenario file path")
    p.add_argument("--start-km", type=float, default=0.0, help="first total separation")
    p.add_argument("--stop-km", type=float, default=100.0, help="last total separation")
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("calibrate", parents=[common], help="estimate source parameters")
    p.add_argument("--measured", required=True, help="measured-rates file (TOML)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pmd", parents=[common], help="PMD visibility ceiling")
    p.add_argument("--wavelength-nm", type=float, default=None)
    p.add_argument("--fiber-length-m", type=float, default=None)
    p.add_argument("--beat-length-mm", type=float, default=None)
    p.add_argument("--bandwidth-ghz", type=float, default=100.0)
    p.set_defaults(func=cmd_pmd)

    p = sub.add_parser("tuning", parents=[common], help="phase-matched emission wavelengths")
    p.add_argument("--model", default=None, help="index-model file (TOML)")
    p.add_argument("--pump-start-nm", type=float, default=None)
    p.add_argument("--pump-stop-nm", type=float, default=None)
    p.add_argument("--pump-points", type=int, default=1)
    p.add_argument("--band-nm", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--grid-points", type=int, default=2001)
    p.set_defaults(func=cmd_tuning)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        AnalysisError,
        CalibrationError,
        HistogramFormatError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
