"""Scenario configuration, batch runs and manifest-level comparison."""

from __future__ import annotations

import hashlib
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import metrics
from .engine import seconds
from .flow import CcaSpec, simulate
from .link import HO_KINDS, HandoverEvent, HandoverKind, LinkProfile, preset
from .trace import FlowTrace

OUTPUT_ROOT_ENV = "HSRSIM_OUTPUT_ROOT"
NEAR_X_DEFAULT = tuple(float(x) for x in range(0, 11))


class ScenarioError(ValueError):
    pass


_SIZE_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([kmg]?i?b)?\s*$", re.IGNORECASE)
_UNITS = {"b": 1, "kb": 1024, "kib": 1024, "mb": 1024 ** 2, "mib": 1024 ** 2, "gb": 1024 ** 3, "gib": 1024 ** 3}


def parse_size(value) -> Optional[int]:
    """Parse ``64KB`` style sizes (binary multiples). ``None``/"unbounded" means no limit."""
    if value is None:
        return None
    if isinstance(value, (int, float)):
        n = int(value)
    else:
        if str(value).strip().lower() in ("", "unbounded", "none", "inf"):
            return None
        m = _SIZE_RE.match(str(value))
        if not m:
            raise ScenarioError(f"cannot parse size {value!r}")
        n = int(float(m.group(1)) * _UNITS[(m.group(2) or "b").lower()])
    if n <= 0:
        raise ScenarioError(f"size must be positive, got {value!r}")
    return n


def _parse_seeds(value) -> list:
    if isinstance(value, int):
        seeds = list(range(value))
    elif isinstance(value, dict):
        start = int(value.get("start", 0))
        seeds = list(range(start, start + int(value["count"])))
    else:
        seeds = [int(s) for s in value]
    if not seeds:
        raise ScenarioError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ScenarioError("seeds must be unique")
    return seeds


def _profile_overrides(raw: dict) -> dict:
    out = dict(raw)
    if "buffer_capacity" in out:
        cap = parse_size(out["buffer_capacity"])
        if cap is None:
            raise ScenarioError("buffer_capacity must be a finite size")
        out["buffer_capacity"] = cap
    for key in ("ho_rates", "ho_durations"):
        if key in out:
            out[key] = {HandoverKind.parse(k): float(v) for k, v in out[key].items()}
    if "scripted_handovers" in out and out["scripted_handovers"] is not None:
        out["scripted_handovers"] = tuple(
            HandoverEvent(HandoverKind.parse(h["kind"]), seconds(h["start"]), seconds(h["end"]))
            for h in out["scripted_handovers"]
        )
    return out


def profile_from_config(raw) -> tuple:
    """Returns ``(preset name or None, LinkProfile)``."""
    if isinstance(raw, str):
        return raw, preset(raw)
    if isinstance(raw, LinkProfile):
        return None, raw
    raw = dict(raw)
    name = raw.pop("preset", None)
    overrides = _profile_overrides(raw)
    if name is not None:
        return name, preset(name).with_overrides(**overrides)
    if "speed" not in overrides or "phy_rate_mean" not in overrides:
        raise ScenarioError("a custom profile needs at least speed and phy_rate_mean (or a preset)")
    return None, LinkProfile(**overrides)


@dataclass
class Scenario:
    profile: LinkProfile
    cca: CcaSpec
    seeds: list
    duration: float = 150.0
    flow_size: Optional[int] = None
    output_dir: Path = Path("runs")
    name: str = "scenario"
    preset_name: Optional[str] = None
    bin_s: float = 0.2
    horizon_s: float = 10.0
    near_x: tuple = NEAR_X_DEFAULT
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        if not self.seeds:
            raise ScenarioError("at least one seed is required")
        if self.bin_s <= 0 or self.horizon_s <= 0:
            raise ScenarioError("bin and horizon must be positive")
        # fail on a bad controller before any run starts
        try:
            self.cca.build()
        except (TypeError, ValueError) as exc:
            raise ScenarioError(str(exc)) from exc

    @classmethod
    def from_dict(cls, cfg: dict, base_dir: Optional[Path] = None) -> "Scenario":
        cfg = dict(cfg)
        if "profile" not in cfg and "preset" not in cfg:
            raise ScenarioError("config needs 'preset' or 'profile'")
        try:
            name, prof = profile_from_config(cfg.get("profile", cfg.get("preset")))
            if "overrides" in cfg:
                prof = prof.with_overrides(**_profile_overrides(cfg["overrides"]))
        except (TypeError, ValueError, KeyError) as exc:
            raise ScenarioError(f"invalid profile: {exc}") from exc
        cca = cfg.get("cca", "cubic")
        if isinstance(cca, str):
            cca = CcaSpec(cca)
        else:
            cca = CcaSpec(cca["name"], dict(cca.get("params", {})))
        out = Path(cfg.get("output_dir", "runs"))
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if not out.is_absolute():
            out = Path(root) / out if root else (base_dir or Path.cwd()) / out
        analysis = cfg.get("analysis", {}) or {}
        return cls(
            profile=prof,
            cca=cca,
            seeds=_parse_seeds(cfg.get("seeds", 1)),
            duration=float(cfg.get("duration", 150.0)),
            flow_size=parse_size(cfg.get("flow_size")),
            output_dir=out,
            name=str(cfg.get("name", name or "scenario")),
            preset_name=name,
            bin_s=float(analysis.get("bin_s", 0.2)),
            horizon_s=float(analysis.get("horizon_s", 10.0)),
            near_x=tuple(float(x) for x in analysis.get("near_x", NEAR_X_DEFAULT)),
            workers=int(cfg.get("workers", 1)),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            cfg = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ScenarioError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ScenarioError(f"config {path} must be a mapping")
        return cls.from_dict(cfg, base_dir=path.parent)

    def identity(self) -> dict:
        """Everything that determines the generated traces."""
        return {
            "profile": self.profile.to_dict(),
            "cca": {"name": self.cca.name, "params": dict(sorted(self.cca.params.items()))},
            "duration": self.duration,
            "flow_size": self.flow_size,
            "seeds": list(self.seeds),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _run_one(args: tuple) -> dict:
    profile, cca, seed, duration, flow_size, out_dir = args
    run = simulate(profile, cca, seed, duration, flow_size)
    trace = run.trace
    trace_path = out_dir / f"trace-seed{seed}.csv"
    trace.write_csv(trace_path)
    summary = metrics.summarize(trace).to_dict()
    summary["seed"] = seed
    summary["handovers"] = {k.value: sum(1 for h in run.schedule if h.kind is k) for k in HO_KINDS}
    summary_path = out_dir / f"summary-seed{seed}.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return {"seed": seed, "trace": trace_path.name, "summary": summary_path.name}


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std(ddof=1)) if a.size > 1 else 0.0}


def ensemble_summary(traces: Sequence[FlowTrace], s: Scenario, out_dir: Optional[Path] = None) -> dict:
    """Aggregate statistics over traces, optionally writing curve CSVs."""
    sums = [metrics.summarize(t) for t in traces]
    rtts = np.concatenate([x.rtt_samples_ms for x in sums]) if sums else np.array([])
    rtt_pct = metrics.percentiles(rtts, (25, 50, 75))
    out = {
        "runs": len(sums),
        "goodput_mbps": _mean_std([x.goodput_mbps for x in sums]),
        "throughput_mbps": _mean_std([x.throughput_mbps for x in sums]),
        "plr_pct": _mean_std([x.plr_pct for x in sums]),
        "rtt_ms": rtt_pct,
        "curves": {},
    }
    has_ho = any(t.of_kind("ho-end") for t in traces)
    if not has_ho:
        return out
    for kind in HO_KINDS:
        imp = metrics.instantaneous_impact(traces, kind, s.bin_s, s.horizon_s)
        near = metrics.near_effect(traces, kind, s.near_x)
        entry = {"count": imp.count, "origin": None if np.isnan(imp.origin) else imp.origin}
        if out_dir is not None and imp.count:
            ip = out_dir / f"impact-{kind.value}.csv"
            ip.write_text("t_s,ratio,point\n" + "".join(f"{a:.3f},{b:.6f},{c}\n" for a, b, c in imp.to_rows()))
            npth = out_dir / f"near-{kind.value}.csv"
            npth.write_text("x_s,ratio\n" + "".join(f"{a:.3f},{b:.6f}\n" for a, b in near.to_rows()))
            entry["impact_csv"] = ip.name
            entry["near_csv"] = npth.name
        out["curves"][kind.value] = entry
    return out


def run_scenario(s: Scenario) -> dict:
    """Run every seed, write traces and summaries, return the manifest."""
    out_dir = Path(s.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ScenarioError(f"output directory {out_dir} is not writable: {exc}") from exc
    jobs = [(s.profile, s.cca, seed, s.duration, s.flow_size, out_dir) for seed in s.seeds]
    if s.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=s.workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    # aggregate from the files on disk so the ensemble carries no hidden state
    traces = [FlowTrace.read_csv(out_dir / r["trace"]) for r in runs]
    ens = ensemble_summary(traces, s, out_dir)
    ens_path = out_dir / "ensemble.json"
    ens_path.write_text(json.dumps(ens, indent=2, sort_keys=True))
    manifest = {
        "name": s.name,
        "config_hash": s.config_hash(),
        "preset": s.preset_name,
        "cca": s.cca.label(),
        "scenario": s.identity(),
        "runs": runs,
        "ensemble": ens_path.name,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


# comparison


def load_manifest(path) -> tuple:
    """Returns ``(manifest dict, directory)``; accepts the file or its directory."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    try:
        return json.loads(p.read_text()), p.parent
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read manifest {p}: {exc}") from exc


@dataclass
class CompareRow:
    label: str
    goodput_mean: float
    goodput_std: float
    rtt_p25: float
    rtt_p50: float
    rtt_p75: float
    goodput_diff: float  # paired mean difference vs the first row
    per_seed: dict = field(default_factory=dict)


def compare(paths: Sequence) -> list:
    if len(paths) < 2:
        raise ScenarioError("compare needs at least two manifests")
    loaded = [load_manifest(p) for p in paths]
    ref_profile = loaded[0][0]["scenario"]["profile"]
    ref_seeds = loaded[0][0]["scenario"]["seeds"]
    for m, _ in loaded[1:]:
        if m["scenario"]["profile"] != ref_profile:
            raise ScenarioError("manifests use different link profiles; comparison would be confounded")
        if sorted(m["scenario"]["seeds"]) != sorted(ref_seeds):
            raise ScenarioError("manifests use different seed lists; comparison would be confounded")
    rows = []
    for m, d in loaded:
        per_seed = {}
        for r in m["runs"]:
            per_seed[r["seed"]] = json.loads((d / r["summary"]).read_text())["goodput_mbps"]
        ens = json.loads((d / m["ensemble"]).read_text())
        g = _mean_std(list(per_seed.values()))
        rows.append(CompareRow(m["cca"], g["mean"], g["std"], ens["rtt_ms"]["p25"], ens["rtt_ms"]["p50"],
                               ens["rtt_ms"]["p75"], 0.0, per_seed))
    base = rows[0].per_seed
    for row in rows:
        row.goodput_diff = float(np.mean([row.per_seed[k] - base[k] for k in base]))
    return rows


def format_table(rows: Sequence[CompareRow]) -> str:
    lines = [f"{'CCA':<24} {'Goodput (Mbps)':>16} {'RTT 25/50/75 (ms)':>20} {'paired diff':>12}"]
    for r in rows:
        rtt = f"{r.rtt_p25:.0f}/{r.rtt_p50:.0f}/{r.rtt_p75:.0f}"
        lines.append(f"{r.label:<24} {r.goodput_mean:>9.2f}±{r.goodput_std:<6.2f} {rtt:>20} {r.goodput_diff:>+12.3f}")
    return "\n".join(lines)

