"""Command-line entry point: ``cabinpds <subcommand> ...``.

Exit status is 0 on success, 1 on a data or validation error and 2 on a
usage or configuration error. Every run emits one JSON manifest, written to
``<out>/manifest.json`` when ``--out`` is given and to stderr otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import pandas as pd
import yaml

from cabinpds import __version__
from cabinpds.cabin import (
    DEFAULT_PITCH_BOUNDS,
    comfort_seat_count,
    config_triples,
    flag_counts,
    layout_indices,
    load_layout,
    load_reference_table,
    load_registry,
    seat_bearing_rows,
    seat_count,
    seat_table,
)
from cabinpds.design import (
    DesignConfig,
    PROVENANCE_FIELDS,
    attach_cabin_attributes,
    build_design,
    filter_records,
    get_spec,
    load_spec_file,
    read_records_csv,
    write_records_csv,
)
from cabinpds.dgp import PRESETS, DgpConfig, generate, recovery_experiment
from cabinpds.errors import CabinPdsError, ConfigError
from cabinpds.lasso import PluginSettings
from cabinpds.market import dispersion_table, format_panels, table_from_counts
from cabinpds.pds import EstimationSpec, format_table, results_to_csv, run_specification

log = logging.getLogger("cabinpds")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


# --------------------------------------------------------------------------- helpers


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _spec_arg(value: str) -> int:
    try:
        spec = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"spec must be an integer in 1-8, got {value!r}") from None
    if not 1 <= spec <= 8:
        raise argparse.ArgumentTypeError(f"spec must be in the range 1-8, got {spec}")
    return spec


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse configuration ({exc})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    unknown = set(data) - {"dgp", "design", "estimation", "simulate"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return data


def _layered(defaults: dict, file_layer: dict, flag_layer: dict, what: str) -> dict:
    """flags > file > defaults, logging where each non-default value came from."""
    unknown = set(file_layer) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {what} settings {sorted(unknown)}")
    out = dict(defaults)
    for source, layer in (("config file", file_layer), ("command line", flag_layer)):
        for k, v in layer.items():
            if v is None:
                continue
            out[k] = v
            log.info("%s.%s = %r (from %s)", what, k, v, source)
    return out


def _jsonable(obj: Any):
    if dataclasses.is_dataclass(obj):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def _emit_manifest(args, config: dict, inputs: Sequence[str | Path], outputs: Sequence[Path], seed=None) -> None:
    manifest = {
        "subcommand": args.command,
        "version": __version__,
        "seed": seed,
        "config": _jsonable(config),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(p.name for p in outputs),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out, "manifest.json").write_text(text, encoding="utf-8")
    else:
        sys.stderr.write(text)


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(out: Path | None, name: str, text: str, written: list[Path]) -> None:
    if out is None:
        return
    p = out / name
    p.write_text(text, encoding="utf-8", newline="\n")
    written.append(p)


# --------------------------------------------------------------------------- subcommands


def cmd_parse_map(args) -> int:
    bounds = tuple(args.pitch_bounds) if args.pitch_bounds else DEFAULT_PITCH_BOUNDS
    out, written = _out_dir(args), []
    for path in args.maps:
        lay = load_layout(path, bounds)
        counts = flag_counts(lay)
        line = (f"{Path(path).name}: {lay.aircraft_model} ({lay.carrier}) capacity {seat_count(lay)}, "
                f"comfort seats {comfort_seat_count(lay)}, middle seats {counts['middle']}, "
                f"window seats {counts['window']}, aisle seats {counts['aisle']}, "
                f"rows {len(seat_bearing_rows(lay))}")
        print(line)
        for t in config_triples(lay):
            print(f"  pitch {t.pitch_inches:g} in: {t.row_count} rows, {t.seat_count} seats")
        rows = [(r, ch, int(f.is_middle), int(f.is_window), int(f.is_aisle), int(f.is_last_row),
                 int(f.is_emergency_exit), int(f.is_comfort)) for r, ch, f in seat_table(lay)]
        frame = pd.DataFrame(rows, columns=["row", "letter", "middle", "window", "aisle", "last_row",
                                            "emergency_exit", "comfort"])
        _write(out, f"{Path(path).stem}_seats.csv", frame.to_csv(index=False, lineterminator="\n"), written)
    _emit_manifest(args, {"pitch_bounds": list(bounds)}, args.maps, written)
    return EXIT_OK


def cmd_indices(args) -> int:
    refs = load_reference_table(args.reference)
    registry = {Path(p).stem: load_layout(p) for p in args.maps} if args.maps else load_registry(args.layouts)
    rows = []
    for key, lay in registry.items():
        rd, pi = layout_indices(lay, refs)
        rows.append((key, lay.aircraft_model, lay.carrier, seat_count(lay), len(seat_bearing_rows(lay)),
                     refs[lay.aircraft_model].max_rows, refs[lay.aircraft_model].max_pitch, rd, pi))
    frame = pd.DataFrame(rows, columns=["layout", "model", "carrier", "seats", "rows", "reference_rows",
                                        "reference_pitch", "IROWDENS", "IPITCH"])
    csv = frame.to_csv(index=False, float_format="%.6f", lineterminator="\n")
    out, written = _out_dir(args), []
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    _write(out, "indices.csv", csv, written)
    inputs = list(args.maps or []) + ([args.reference] if args.reference else [])
    _emit_manifest(args, {"reference": args.reference or "bundled or $CABINPDS_REFERENCE",
                          "layouts": args.layouts or "bundled"}, inputs, written)
    return EXIT_OK


def cmd_tabulate(args) -> int:
    frame = pd.read_csv(args.data)
    if {"seat_row", "seat_letter"} <= set(frame.columns):
        table = dispersion_table(zip(frame["seat_row"], frame["seat_letter"].astype(str)))
    elif {"row", *"ABCDEF"} <= set(frame.columns):
        table = table_from_counts(frame[list("ABCDEF")].to_numpy(), rows=tuple(frame["row"].astype(int)))
    else:
        raise CabinPdsError(f"{args.data}: expected seat_row/seat_letter columns or a row,A..F count table")
    text = format_panels(table)
    print(text)
    if table.excluded:
        log.warning("%d assignments outside rows %d-%d or letters %s were excluded",
                    table.excluded, table.rows[0], table.rows[-1], "".join(table.letters))
    out, written = _out_dir(args), []
    long = []
    for panel, body in table.panels().items():
        for row in body:
            label = row[0]
            for letter, v in zip(table.letters, row[1:1 + len(table.letters)]):
                long.append((panel, label, letter, v))
    _write(out, "occupancy.csv", pd.DataFrame(long, columns=["panel", "row", "letter", "value"]).to_csv(
        index=False, lineterminator="\n"), written)
    _write(out, "occupancy.txt", text + "\n", written)
    _emit_manifest(args, {"excluded": table.excluded}, [args.data], written)
    return EXIT_OK


def _estimation_settings(args, cfg: dict) -> tuple[DesignConfig, EstimationSpec, dict]:
    est_defaults = {**dataclasses.asdict(PluginSettings()), "select": True, "cluster": True, "t_critical": False}
    est = _layered(est_defaults, cfg.get("estimation", {}) or {}, {
        "cluster": False if args.robust else None,
        "t_critical": True if args.t_critical else None,
        "select": False if args.no_select else None,
    }, "estimation")
    des = _layered(dataclasses.asdict(DesignConfig()), cfg.get("design", {}) or {},
                   {"adv_transform": args.adv_transform}, "design")
    des["bucket_edges"] = tuple(des["bucket_edges"])
    settings = PluginSettings(**{k: est[k] for k in dataclasses.asdict(PluginSettings())})
    spec = EstimationSpec(settings, est["select"], est["cluster"], est["t_critical"])
    return DesignConfig(**des), spec, {"estimation": est, "design": des}


def cmd_estimate(args) -> int:
    cfg = _read_config(args.config)
    design_cfg, est_spec, resolved = _estimation_settings(args, cfg)
    frame = read_records_csv(args.data)
    inputs = [args.data] + [p for p in (args.config, args.reference, args.spec_file) if p]
    if args.reference:
        if not set(PROVENANCE_FIELDS) - {"carrier"} <= set(frame.columns):
            raise CabinPdsError("--reference needs layout, seat_row and seat_letter columns in the data")
        frame = attach_cabin_attributes(frame, load_registry(args.layouts), load_reference_table(args.reference))
    specs = [load_spec_file(args.spec_file)] if args.spec_file else [get_spec(s) for s in args.spec]
    results, filters = [], {}
    for spec in specs:
        kept, report = filter_records(frame, spec)
        filters[str(spec.spec_id)] = {"n_in": report.n_in, "n_out": report.n_out, "exclusions": report.exclusions}
        log.info("spec %s: %d of %d records pass the validity filter", spec.spec_id, report.n_out, report.n_in)
        results.append(run_specification(build_design(kept, spec, design_cfg), est_spec))
    table = format_table(results)
    print(table)
    out, written = _out_dir(args), []
    _write(out, "results.csv", results_to_csv(results), written)
    _write(out, "results.txt", table + "\n", written)
    if args.dump_selection and results:
        rows = [(r.spec_id, c) for r in results for c in r.selected_controls]
        _write(out, "selected_controls.csv", pd.DataFrame(rows, columns=["spec", "control"]).to_csv(
            index=False, lineterminator="\n"), written)
    resolved.update({"specs": [dataclasses.asdict(s) for s in specs], "filter": filters,
                     "header": results[0].header if results else {}})
    _emit_manifest(args, resolved, inputs, written, seed=args.seed)
    return EXIT_OK


def _default_spec_for(config: DgpConfig) -> int:
    if config.density_measure == "pitch":
        return 8
    return 5 if config.middle_mode == "pooled" else 6


def cmd_simulate(args) -> int:
    cfg = _read_config(args.config)
    base = dict(PRESETS[args.preset]) if args.preset else {}
    dgp_file = {**base, **(cfg.get("dgp", {}) or {})}
    flags = {k: v for k, v in {"seed": args.seed, "n": args.n}.items() if v is not None}
    merged = {**dgp_file, **flags}
    for k, v in merged.items():
        log.info("dgp.%s = %r", k, v)
    config = DgpConfig.from_dict(merged)
    sim = _layered({"reps": 0, "spec": _default_spec_for(config)}, cfg.get("simulate", {}) or {},
                   {"reps": args.reps, "spec": args.spec}, "simulate")
    design_cfg, est_spec, resolved = _estimation_settings(args, cfg)
    out, written = _out_dir(args), []
    data = generate(config)
    if out is not None:
        write_records_csv(data.frame, out / "dataset.csv")
        written.append(out / "dataset.csv")
    _write(out, "truth.csv", data.truth_table().to_csv(index=False, float_format="%.10g", lineterminator="\n"),
           written)
    print(f"generated {len(data.frame)} records on {data.frame.groupby(['origin', 'destination']).ngroups} "
          f"directed airport pairs (seed {config.seed})")
    if sim["reps"] > 0:
        spec = get_spec(int(sim["spec"]))
        report = recovery_experiment(config, int(sim["reps"]), spec, estimation=est_spec)
        print(report.to_text())
        _write(out, "coverage.csv", report.to_csv(), written)
        _write(out, "coverage.txt", report.to_text(), written)
    resolved.update({"dgp": config.to_dict(), "simulate": sim})
    inputs = [args.config] if args.config else []
    _emit_manifest(args, resolved, inputs, written, seed=config.seed)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cabinpds", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(sp):
        sp.add_argument("--out", help="directory for CSV outputs and manifest.json")
        return sp

    sp = common(sub.add_parser("parse-map", help="parse seat maps and report seat counts and flags"))
    sp.add_argument("maps", nargs="+", help="seat-map files")
    sp.add_argument("--pitch-bounds", nargs=2, type=float, metavar=("LO", "HI"))
    sp.set_defaults(func=cmd_parse_map)

    sp = common(sub.add_parser("indices", help="row-density and pitch indices per layout"))
    sp.add_argument("maps", nargs="*", help="seat-map files (default: bundled layouts)")
    sp.add_argument("--layouts", help="directory of .map files")
    sp.add_argument("--reference", help="model reference CSV (model,max_rows,max_pitch)")
    sp.set_defaults(func=cmd_indices)

    sp = common(sub.add_parser("tabulate", help="occupancy by row and seat letter"))
    sp.add_argument("--data", required=True, help="CSV with seat_row,seat_letter or row,A..F counts")
    sp.set_defaults(func=cmd_tabulate)

    def estimation_flags(sp):
        sp.add_argument("--config", help="YAML or JSON configuration file")
        sp.add_argument("--robust", action="store_true", help="HC1 instead of airport-pair clustering")
        sp.add_argument("--t-critical", action="store_true", help="t(G-1) critical values for stars")
        sp.add_argument("--no-select", action="store_true", help="skip selection (no controls enter)")
        sp.add_argument("--adv-transform", choices=("level", "log1p"))

    sp = common(sub.add_parser("estimate", help="post-double-selection estimates for specs 1-8"))
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--spec", type=_spec_arg, nargs="+", help="specification number(s), 1-8")
    grp.add_argument("--spec-file", help="YAML/JSON spec with interest and blocks lists")
    sp.add_argument("--data", required=True, help="records CSV")
    sp.add_argument("--reference", help="recompute cabin attributes from layouts with this reference CSV")
    sp.add_argument("--layouts", help="layout directory used with --reference")
    sp.add_argument("--seed", type=int, help="recorded in the manifest; estimation is deterministic")
    sp.add_argument("--dump-selection", action="store_true", help="also write the selected controls")
    estimation_flags(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = common(sub.add_parser("simulate", help="synthetic data and Monte Carlo recovery"))
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--reps", type=int, help="recovery replications (0: dataset only)")
    sp.add_argument("--spec", type=_spec_arg, help="specification for the recovery run")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int, help="sample size")
    estimation_flags(sp)
    sp.set_defaults(func=cmd_simulate)
    return p


def _setup_logging(verbose: int, quiet: bool) -> None:
    level = logging.ERROR if quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbose, 2)]
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("cabinpds")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        log.error("configuration error: %s", exc)
        return EXIT_USAGE
    except (CabinPdsError, OSError, ValueError, KeyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
