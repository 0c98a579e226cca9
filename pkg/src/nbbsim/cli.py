"""Command-line front end: calibrate | histogram | sweep | endurance | mvm | logic | serve.

Every experiment requires an explicit seed (flag or config); output CSVs
are byte-reproducible for identical config + seed. With --assert the
exit code is non-zero unless the requested accuracy thresholds hold.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import SimConfig, load_config
from .controller import Controller
from .errors import NbbError
from .experiments import (DEFAULT_SWEEP_REFS_OHM, ExperimentKind,
                          ExperimentSpec, run_endurance, run_error_sweep,
                          run_histogram, run_logic_demo, run_mvm_demo)
from .server import ControllerServer, serve_stdio


def parse_ohms(text: str) -> list:
    """Parse a comma list like '1k,50k,1M' into ohm values."""
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        scale = 1.0
        if token[-1] in "kK":
            scale, token = 1e3, token[:-1]
        elif token[-1] in "M":
            scale, token = 1e6, token[:-1]
        values.append(float(token) * scale)
    if not values:
        raise argparse.ArgumentTypeError("no resistance values given")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbb", description="Crossbar instrumentation board simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        if needs_out:
            p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("calibrate", help="calibrate all four TIA stages")
    common(p, needs_out=False)
    p.add_argument("--out", required=True, help="calibration JSON path")
    p.add_argument("--samples", type=int, default=None,
                   help="ADC samplings per calibration point")

    p = sub.add_parser("histogram", help="repeat-measure one reference resistor")
    common(p)
    p.add_argument("--repeats", type=int, default=1000)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--truth", type=float, default=99_896.0,
                   help="reference value in ohm")
    p.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit non-zero unless error<5%% and sigma<1%%")

    p = sub.add_parser("sweep", help="error/sigma sweep over reference values")
    common(p)
    p.add_argument("--repeats", type=int, default=1000,
                   help="measurements per point (10000 for the full-scale run)")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--refs", type=parse_ohms, default=None,
                   help="comma list, e.g. 1k,50k,100k,1M")
    p.add_argument("--assert", dest="assert_", action="store_true")

    p = sub.add_parser("endurance", help="alternating RESET/SET cycling")
    common(p)
    p.add_argument("--repeats", type=int, default=100, help="cycles")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--assert", dest="assert_", action="store_true")

    p = sub.add_parser("mvm", help="random-matrix analog MVM demo")
    common(p)

    p = sub.add_parser("logic", help="stateful NOR truth-table demo")
    common(p)
    p.add_argument("--assert", dest="assert_", action="store_true")

    p = sub.add_parser("serve", help="serve the NDJSON wire protocol")
    common(p, needs_out=False)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--port", type=int, help="TCP port (0 picks a free one)")
    group.add_argument("--stdio", action="store_true",
                       help="serve a single session over stdin/stdout")
    return parser


def _load(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _spec(args, kind: ExperimentKind, **overrides) -> ExperimentSpec:
    cfg_seed = overrides.pop("seed")
    return ExperimentSpec(
        kind=kind,
        seed=cfg_seed,
        out_path=args.out,
        repeats=getattr(args, "repeats", 1000),
        samples_per_measurement=getattr(args, "samples", 50),
        **overrides,
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        seed = cfg.seed

        if args.command == "calibrate":
            controller = Controller(cfg)
            table = controller.calibrate(n_samples=getattr(args, "samples", None))
            table.save(args.out)
            print(json.dumps({"calibrated_stages": sorted(table.entries),
                              "path": args.out}, sort_keys=True))
            return 0

        if args.command == "histogram":
            spec = _spec(args, ExperimentKind.HISTOGRAM, seed=seed,
                         truth_ohm=args.truth)
            summary = run_histogram(spec, cfg)
            print(json.dumps(summary, sort_keys=True))
            if args.assert_:
                ok = (summary["count"] > 0
                      and summary["relative_error_pct"] < 5.0
                      and summary["relative_sigma_pct"] < 1.0)
                return 0 if ok else 1
            return 0

        if args.command == "sweep":
            spec = _spec(args, ExperimentKind.ERROR_SWEEP, seed=seed,
                         reference_values=args.refs or list(DEFAULT_SWEEP_REFS_OHM))
            summary = run_error_sweep(spec, cfg)
            print(json.dumps(summary, sort_keys=True))
            if args.assert_:
                ok_points = [p for p in summary["points"] if p["status"] == "ok"]
                ok = bool(ok_points) and all(
                    p["relative_error_pct"] < 5.0 and p["relative_sigma_pct"] < 1.0
                    for p in ok_points)
                return 0 if ok else 1
            return 0

        if args.command == "endurance":
            spec = _spec(args, ExperimentKind.ENDURANCE, seed=seed)
            summary = run_endurance(spec, cfg)
            print(json.dumps(summary, sort_keys=True))
            if args.assert_:
                ok = (summary["median_ratio"] is not None
                      and summary["median_ratio"] >= 5.0
                      and summary["post_set_max_ohm"] < summary["post_reset_min_ohm"])
                return 0 if ok else 1
            return 0

        if args.command == "mvm":
            spec = _spec(args, ExperimentKind.MVM_DEMO, seed=seed)
            summary = run_mvm_demo(spec, cfg)
            print(json.dumps(summary, sort_keys=True))
            return 0

        if args.command == "logic":
            spec = _spec(args, ExperimentKind.LOGIC_DEMO, seed=seed)
            summary = run_logic_demo(spec, cfg)
            print(json.dumps(summary, sort_keys=True))
            if getattr(args, "assert_", False):
                return 0 if summary["all_pass"] else 1
            return 0

        if args.command == "serve":
            controller = Controller(cfg)
            if args.stdio:
                serve_stdio(controller, sys.stdin, sys.stdout)
                return 0
            with ControllerServer(controller, port=args.port) as server:
                print(f"listening on {server.port}", file=sys.stderr, flush=True)
                try:
                    server.serve_forever()
                except KeyboardInterrupt:
                    pass
            return 0

        raise AssertionError(f"unhandled command {args.command}")
    except NbbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
