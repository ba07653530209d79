"""Command-line entry point: ``hsrsim run|compare|analyze|presets``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import metrics
from .link import HO_KINDS, preset, preset_names
from .scenario import Scenario, ScenarioError, compare, format_table, run_scenario
from .trace import FlowTrace, TraceFormatError


def _cmd_run(args: argparse.Namespace) -> int:
    s = Scenario.load(args.config)
    if args.output_dir:
        s.output_dir = Path(args.output_dir)
    if args.workers:
        s.workers = args.workers
    manifest = run_scenario(s)
    ens = json.loads((s.output_dir / manifest["ensemble"]).read_text())
    g = ens["goodput_mbps"]
    print(f"{manifest['name']}: {len(manifest['runs'])} runs, {manifest['cca']}, "
          f"goodput {g['mean']:.3f}±{g['std']:.3f} Mbps")
    print(f"manifest: {s.output_dir / 'manifest.json'}")
    print(f"config hash: {manifest['config_hash']}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    rows = compare(args.manifests)
    print(format_table(rows))
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    trace = FlowTrace.read_csv(args.trace)
    trace.validate()
    out = metrics.summarize(trace).to_dict()
    spans = metrics.handovers(trace, infer_start=args.infer_start)
    out["handovers"] = {k.value: sum(1 for h in spans if h.kind == k.value) for k in HO_KINDS}
    if spans:
        out["impact_origin"] = {}
        for k in HO_KINDS:
            imp = metrics.instantaneous_impact([trace], k, args.bin, args.horizon, infer_start=args.infer_start)
            if imp.count:
                out["impact_origin"][k.value] = imp.origin
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_presets(args: argparse.Namespace) -> int:
    print(f"{'name':<12} {'PHY Mbps':>9} {'loss %':>7}  handovers per 150 s (I/II/III)")
    for name in preset_names():
        p = preset(name)
        counts = "/".join(f"{p.ho_rates[k]:.2f}" for k in HO_KINDS)
        print(f"{name:<12} {p.phy_rate_mean:>9.2f} {100 * p.random_loss:>7.3f}  {counts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hsrsim", description="LTE high-speed-rail TCP flow simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario config (YAML)")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override the config's output_dir")
    r.add_argument("--workers", type=int, default=0, help="parallel processes across seeds")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="compare run manifests in Table-4 layout")
    c.add_argument("manifests", nargs="+")
    c.set_defaults(func=_cmd_compare)

    a = sub.add_parser("analyze", help="summarize a trace CSV")
    a.add_argument("trace")
    a.add_argument("--bin", type=float, default=0.2, help="impact bin width, seconds")
    a.add_argument("--horizon", type=float, default=10.0, help="impact horizon, seconds")
    a.add_argument("--infer-start", action="store_true",
                   help="estimate handover starts from the last delivery before each end")
    a.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("presets", help="list link presets")
    p.set_defaults(func=_cmd_presets)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, TraceFormatError, metrics.MetricsError, ValueError, OSError) as exc:
        print(f"hsrsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
