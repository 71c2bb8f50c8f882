"""Command-line pipeline: demand fitting, zone transfer, substitution fitting,
bootstrap, revenue analysis, synthetic scenarios and input validation.

Exit codes: 0 success, 1 input or validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, demand, factor, ingest, synth
from .core import DEFAULT_SCHEME, InputError, NumericalError, validate_trip_matrix

log = logging.getLogger("scootsub")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- helpers ---------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digests(paths) -> dict[str, str]:
    return {str(p): sha256(p) for p in paths if p}


def read_config(path) -> dict:
    """Flat configuration: a JSON object or ``key = value`` lines (``#`` comments)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise InputError(f"{path}: config must be a JSON object")
        return data
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = _coerce(v)
    return out


def _coerce(v: str):
    low = v.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def write_manifest(args, inputs, outputs, seed=None, target=None) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "_parser") and _jsonable(v)}
    manifest = {
        "subcommand": args.command,
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "inputs": digests(inputs),
        "config": config,
        "seed": seed,
        "outputs": [str(p) for p in outputs],
    }
    if target is None:
        print(json.dumps(manifest, indent=2), file=sys.stderr)
    else:
        dump_json(manifest, target)


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def manifest_path(out) -> Path | None:
    return None if out is None else Path(str(out) + ".manifest.json")


def _scheme_from_args(args):
    if getattr(args, "scheme", None):
        from .core import DistanceBinScheme

        return DistanceBinScheme.from_dict(json.loads(Path(args.scheme).read_text()))
    return DEFAULT_SCHEME


def _modes(args):
    return [m.strip() for m in args.modes.split(",")] if getattr(args, "modes", None) else None


def _profiles(path, system):
    profiles, errors = ingest.load_zone_profiles(path, system=system)
    if errors:
        for e in errors:
            log.error("%s: %s", path, e)
        raise InputError(f"{path}: {len(errors)} invalid row(s)")
    return profiles


# --- subcommands -----------------------------------------------------------


def cmd_fit_demand(args) -> int:
    profiles = _profiles(args.profiles, args.system)
    observed = ingest.load_zone_values(args.observed, args.response_column)
    spec = demand.DemandModelSpec.from_dict(json.loads(Path(args.spec).read_text())) if args.spec else demand.DEFAULT_SPEC

    screen = demand.screen_collinearity(
        [p for p in profiles if p.zone.id in observed], spec, args.screen_threshold
    )
    for a, b, r in screen.flagged:
        log.warning("collinear predictors %s ~ %s (r = %+.3f)", a, b, r)
    for d in screen.degenerate:
        log.warning("predictor %s has zero variance", d)

    if args.no_select:
        model, trace = demand.fit_ols(profiles, observed, spec), []
    else:
        model, trace = demand.backward_select(profiles, observed, spec, args.alpha)
    model.metadata = {
        "tool_version": __version__,
        "inputs": digests([args.profiles, args.observed, args.spec]),
        "alpha": None if args.no_select else args.alpha,
        "initial_spec": spec.to_dict(),
        "removals": [{"step": r.step, "predictor": r.predictor, "p_value": r.p_value} for r in trace],
        "collinearity": {"threshold": args.screen_threshold,
                         "flagged": [list(f) for f in screen.flagged], "degenerate": screen.degenerate},
    }
    print(model.summary())
    outputs = []
    if args.out:
        Path(args.out).write_text(model.to_json() + "\n", encoding="utf-8")
        outputs.append(args.out)
    write_manifest(args, [args.profiles, args.observed, args.spec], outputs, target=manifest_path(args.out))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = demand.DemandModel.from_json(Path(args.model).read_text())
    profiles = _profiles(args.profiles, args.system)
    forecasts = demand.predict(model, profiles)
    values = {f.zone.id: f.trips for f in forecasts}
    if args.out:
        ingest.write_zone_values(args.out, values)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["zone_id", "trips"])
        for z, v in values.items():
            w.writerow([z, ingest.fmt(v)])
    log.info("total forecast trips: %.6g", sum(values.values()))
    write_manifest(args, [args.model, args.profiles], [args.out] if args.out else [], target=manifest_path(args.out))
    return EXIT_OK


def cmd_crosswalk(args) -> int:
    cw = ingest.load_crosswalk(args.crosswalk, args.source_system, args.target_system)
    inputs = [args.crosswalk]
    if args.values:
        values = ingest.load_zone_values(args.values, args.column)
        population = None
        if args.kind == "intensive":
            if not args.profiles:
                raise InputError("intensive transfer needs --profiles for source populations")
            population = {p.zone.id: p.population for p in _profiles(args.profiles, args.source_system)}
            inputs.append(args.profiles)
        out = ingest.crosswalk_transfer(values, ingest.AttributeKind(args.column, args.kind), cw, population)
        ingest.write_zone_values(args.out, dict(sorted(out.items())), args.column)
        inputs.append(args.values)
    elif args.profiles:
        profiles = _profiles(args.profiles, args.source_system)
        ingest.write_zone_profiles(args.out, ingest.transfer_profiles(profiles, cw, args.target_system))
        inputs.append(args.profiles)
    else:
        raise InputError("crosswalk needs --profiles or --values")
    write_manifest(args, inputs, [args.out], target=manifest_path(args.out))
    return EXIT_OK


def _load_factor_inputs(forecasts_path, trips_path, access_path, scheme, modes):
    forecasts = ingest.load_forecasts(forecasts_path) if forecasts_path else None
    zones = [f.zone.id for f in forecasts] if forecasts else None
    trips = ingest.load_trip_matrix(trips_path, scheme, modes=modes, zones=sorted(zones) if zones else None)
    problems = validate_trip_matrix(trips)
    if problems:
        raise InputError("; ".join(v.message for v in problems))
    access = ingest.load_access(access_path) if access_path else None
    return forecasts, trips, access


def cmd_fit_factor(args) -> int:
    scheme = _scheme_from_args(args)
    forecasts, trips, access = _load_factor_inputs(args.forecasts, args.trips, args.access, scheme, _modes(args))
    cfg = factor.SolverConfig(method=args.method, beta_mode=args.beta_mode, max_iter=args.max_iter,
                              n_starts=args.starts, seed=args.seed, transit_mode=args.transit_mode)
    result = factor.fit(forecasts, trips, access, cfg)
    doc = factor_document(result, trips, args)
    dump_json(doc, args.out)
    print(params_table(result, trips))
    write_manifest(args, [args.forecasts, args.trips, args.access, args.scheme], [args.out], args.seed,
                   manifest_path(args.out))
    if not result.converged:
        log.error("solver did not converge (%s after %d iterations)", result.stop_reason, result.iterations)
        return EXIT_NUMERIC
    return EXIT_OK


def factor_document(result, trips, args) -> dict:
    lo, hi = factor.bounds(len(trips.modes), len(result.params.distance_betas))
    names = factor.parameter_names(trips.modes, len(result.params.distance_betas), trips.scheme.labels())
    doc = {
        "model": "multifactor-substitution",
        "tool_version": __version__,
        "modes": list(trips.modes),
        "transit_mode": result.config.transit_mode,
        "scheme": trips.scheme.to_dict(),
        "parameter_names": names,
        "bounds": {"lower": lo.tolist(), "upper": [None if np.isinf(x) else x for x in hi]},
        **result.to_dict(),
        "inputs": {
            "forecasts": args.forecasts,
            "trips": args.trips,
            "access": args.access,
        },
        "input_digests": digests([args.forecasts, args.trips, args.access]),
    }
    return doc


def params_table(result, trips) -> str:
    names = factor.parameter_names(trips.modes, len(result.params.distance_betas), trips.scheme.labels())
    theta = factor.pack(result.params, trips.modes)
    lines = [f"{'Variable':<16}{'Coefficient':>14}"]
    lines += [f"{n:<16}{v:>14.6g}" for n, v in zip(names, theta)]
    lines.append(f"objective Z = {result.objective:.6g}; converged = {result.converged} ({result.stop_reason}); "
                 f"iterations = {result.iterations}")
    return "\n".join(lines)


def _reload(doc, args):
    """Inputs of a saved factor model, with command-line overrides."""
    from .core import DistanceBinScheme

    scheme = DistanceBinScheme.from_dict(doc["scheme"])
    paths = {k: getattr(args, k, None) or doc["inputs"].get(k) for k in ("forecasts", "trips", "access")}
    forecasts, trips, access = _load_factor_inputs(paths["forecasts"], paths["trips"], paths["access"],
                                                   scheme, doc["modes"])
    return paths, forecasts, trips, access


def cmd_bootstrap(args) -> int:
    doc = json.loads(Path(args.model).read_text())
    paths, forecasts, trips, access = _reload(doc, args)
    if forecasts is None:
        raise InputError("bootstrap needs the forecasts the model was fitted to")
    fitted = factor.FitResult.from_dict(doc)
    summary = factor.bootstrap(fitted, forecasts, trips, access, B=args.replicates, seed=args.seed,
                               ci_level=args.ci, workers=args.workers)
    print(summary.table())
    outputs = []
    if args.out:
        doc["bootstrap"] = summary.to_dict()
        dump_json(doc, args.out)
        outputs.append(args.out)
    write_manifest(args, [args.model, *paths.values()], outputs, args.seed, manifest_path(args.out))
    return EXIT_OK


def cmd_analyze(args) -> int:
    doc = json.loads(Path(args.model).read_text())
    paths, _, trips, access = _reload(doc, args)
    params = factor.FactorModelParams.from_dict(doc["params"])
    transit = doc.get("transit_mode", "transit")
    preds = factor.predict_substitution(params, trips, access, transit)
    fare = analysis.FareSchedule(args.fare_base, args.fare_per_minute)
    report = analysis.substitution_revenue(preds, trips.scheme, fare, args.speed, args.avg_duration)
    shares = analysis.substitution_shares(preds, trips, transit)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "shares.csv", out / "revenue.csv", out / "summary.json"]
    with written[0].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "zone", "bin", "share"])
        for m, z, b, s in shares.rows():
            w.writerow([m, z, b, "" if s is None else ingest.fmt(s)])
    with written[1].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "component", "daily_dollars"])
        for row in report.by_distance():
            for m, v in row["direct"].items():
                w.writerow([row["bin"], m, ingest.fmt(v)])
            w.writerow([row["bin"], "access", ingest.fmt(row["access"])])
        w.writerow(["all", "unattributed", ingest.fmt(report.unattributed)])
    total_trips = sum(p.total for p in preds)
    summary = {
        **report.to_dict(),
        "total_substituted_trips": total_trips,
        "constant_trips": sum(p.constant_share for p in preds),
        "direct_trips_by_mode": {m: float(sum(p.breakdown[k].sum() for p in preds)) for k, m in enumerate(trips.modes)},
        "access_trips": float(sum(p.access_breakdown.sum() for p in preds)),
    }
    dump_json(summary, written[2])
    if args.geo_map:
        written.append(out / "zones.geojson")
        dump_json(zone_features(args.geo_map, preds, shares), written[-1])
    print(f"daily revenue ${report.total_daily:,.2f}; annual ${report.total_annual:,.0f}")
    write_manifest(args, [args.model, *paths.values(), args.geo_map], written, target=out / "manifest.json")
    return EXIT_OK


def zone_features(mapping_path, preds, shares) -> dict:
    """GeoJSON FeatureCollection of per-zone properties (geometry left null)."""
    mapping = {}
    _, rows = ingest._read_rows(mapping_path, ["zone_id", "feature_id"])
    for _, row in rows:
        mapping[row["zone_id"].strip()] = row["feature_id"].strip()
    feats = []
    for p in preds:
        if p.zone.id not in mapping:
            continue
        props = {"zone_id": p.zone.id, "substituted_trips": p.total, "constant_trips": p.constant_share,
                 "access_trips": float(p.access_breakdown.sum())}
        for k, m in enumerate(p.modes):
            props[f"direct_trips_{m}"] = float(p.breakdown[k].sum())
        for name in shares.modes:
            props[f"share_{name}"] = shares.by_mode_zone.get((name, p.zone.id))
        feats.append({"type": "Feature", "id": mapping[p.zone.id], "geometry": None, "properties": props})
    return {"type": "FeatureCollection", "features": feats}


def cmd_synth(args) -> int:
    raw = read_config(args.config) if args.config else {}
    for key in ("seed", "n_zones", "noise_sd_log", "noise_sd_trips"):
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    cfg = synth.ScenarioConfig.from_dict(raw)
    scn = synth.generate(cfg)
    written = synth.write_scenario(scn, args.out_dir)
    write_manifest(args, [args.config], written, cfg.seed, Path(args.out_dir) / "manifest.json")
    print(f"wrote {len(written)} files to {args.out_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    problems = []
    checked = []
    if args.profiles:
        _, errors = ingest.load_zone_profiles(args.profiles, system=args.system)
        problems += [f"{args.profiles}: {e}" for e in errors]
        checked.append(args.profiles)
    if args.trips:
        try:
            m = ingest.load_trip_matrix(args.trips, _scheme_from_args(args), modes=_modes(args))
            problems += [f"{args.trips}: {v.message}" for v in validate_trip_matrix(m)]
        except InputError as exc:
            problems.append(str(exc))
        checked.append(args.trips)
    for path, loader in ((args.access, ingest.load_access), (args.forecasts, ingest.load_forecasts),
                         (args.crosswalk, ingest.load_crosswalk)):
        if path:
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    items = loader(path)
                    if loader is ingest.load_crosswalk:
                        ingest.normalized_weights(items)
                problems += [f"{path}: {w.message}" for w in caught]
            except InputError as exc:
                problems.append(str(exc))
            checked.append(path)
    if not checked:
        raise InputError("nothing to validate; pass at least one input file")
    for p in problems:
        print(p, file=sys.stderr)
    print(f"checked {len(checked)} file(s): {len(problems)} problem(s)", file=sys.stderr)
    return EXIT_INPUT if problems else EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scootsub", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"scootsub {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p.subcommands = sub.choices

    def add(name, func, help):
        sp = sub.add_parser(name, help=help, description=help)
        sp.add_argument("--config", help="flat key = value (or flat JSON) file of option defaults")
        sp.set_defaults(func=func)
        return sp

    sp = add("fit-demand", cmd_fit_demand, "fit the log-log trip-generation model")
    sp.add_argument("--profiles", required=True)
    sp.add_argument("--observed", required=True, help="zone_id,trips CSV of observed daily trips")
    sp.add_argument("--response-column", default="trips")
    sp.add_argument("--spec", help="JSON {response, predictors}; defaults to the four-term model")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--no-select", action="store_true", help="skip backward selection")
    sp.add_argument("--screen-threshold", type=float, default=0.7)
    sp.add_argument("--system", default="zip")
    sp.add_argument("--out")

    sp = add("predict", cmd_predict, "forecast zonal e-scooter trips from a fitted demand model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--profiles", required=True)
    sp.add_argument("--system", default="taz")
    sp.add_argument("--out")

    sp = add("crosswalk", cmd_crosswalk, "transfer attributes between zoning systems")
    sp.add_argument("--crosswalk", required=True)
    sp.add_argument("--profiles")
    sp.add_argument("--values")
    sp.add_argument("--column", default="trips")
    sp.add_argument("--kind", choices=["extensive", "intensive"], default="extensive")
    sp.add_argument("--source-system", default="zip")
    sp.add_argument("--target-system", default="taz")
    sp.add_argument("--out", required=True)

    sp = add("fit-factor", cmd_fit_factor, "calibrate the multifactor substitution model")
    sp.add_argument("--forecasts", required=True)
    sp.add_argument("--trips", required=True)
    sp.add_argument("--access")
    sp.add_argument("--scheme", help="JSON {edges, delta} distance-bin scheme")
    sp.add_argument("--modes", help="comma-separated mode list (default: survey modes present)")
    sp.add_argument("--transit-mode", default="transit")
    sp.add_argument("--beta-mode", choices=[factor.SHARED, factor.PER_BIN], default=factor.SHARED)
    sp.add_argument("--method", choices=["lm", "pgd"], default="lm")
    sp.add_argument("--starts", type=int, default=8, help="random starts after the deterministic one")
    sp.add_argument("--max-iter", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("bootstrap", cmd_bootstrap, "bootstrap confidence intervals for a fitted factor model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--forecasts")
    sp.add_argument("--trips")
    sp.add_argument("--access")
    sp.add_argument("--replicates", type=int, default=40)
    sp.add_argument("--ci", type=float, default=0.90)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", help="write the model JSON with a bootstrap block here")

    sp = add("analyze", cmd_analyze, "substitution shares and revenue by distance")
    sp.add_argument("--model", required=True)
    sp.add_argument("--trips")
    sp.add_argument("--access")
    sp.add_argument("--speed", type=float, default=analysis.DEFAULT_SPEED_MPH)
    sp.add_argument("--avg-duration", type=float, default=analysis.DEFAULT_AVG_DURATION_MIN)
    sp.add_argument("--fare-base", type=float, default=1.0)
    sp.add_argument("--fare-per-minute", type=float, default=0.15)
    sp.add_argument("--geo-map", help="zone_id,feature_id CSV; writes zones.geojson")
    sp.add_argument("--out-dir", required=True)

    sp = sub.add_parser("synth", help="write a synthetic scenario with planted parameters")
    sp.set_defaults(func=cmd_synth)
    sp.add_argument("--config", help="scenario config (JSON or key = value)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n-zones", type=int)
    sp.add_argument("--noise-sd-log", type=float)
    sp.add_argument("--noise-sd-trips", type=float)
    sp.add_argument("--out-dir", required=True)

    sp = add("validate", cmd_validate, "check input files without modifying them")
    sp.add_argument("--profiles")
    sp.add_argument("--trips")
    sp.add_argument("--access")
    sp.add_argument("--forecasts")
    sp.add_argument("--crosswalk")
    sp.add_argument("--scheme")
    sp.add_argument("--modes")
    sp.add_argument("--system", default="zip")
    return p


def _config_path(argv) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv):
    parser = build_parser()
    command = next((t for t in argv if t in parser.subcommands), None)
    cfg = _config_path(argv)
    if command and command != "synth" and cfg:
        # flags > config file > built-in defaults
        defaults = {k.replace("-", "_"): v for k, v in read_config(cfg).items()}
        sp = parser.subcommands[command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(defaults) - known)
        if unknown:
            raise InputError(f"{cfg}: unknown option(s) {', '.join(unknown)}")
        sp.set_defaults(**defaults)
        for a in sp._actions:
            if a.dest in defaults:
                a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
