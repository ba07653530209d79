import json

import pytest
import yaml

from hsrsim import cli
from hsrsim.flow import CcaSpec
from hsrsim.link import HandoverKind, preset
from hsrsim.scenario import Scenario, ScenarioError, compare, parse_size, run_scenario
from hsrsim.trace import FlowTrace


def _write(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def _cfg(out, **kw):
    cfg = {"preset": "hsr-350-A", "cca": "cubic", "seeds": [0, 1], "duration": 20, "output_dir": str(out)}
    cfg.update(kw)
    return cfg


@pytest.mark.parametrize("text,expect", [("64KB", 65536), ("64 KiB", 65536), ("1MB", 1 << 20), (1000, 1000),
                                         (None, None), ("unbounded", None)])
def test_parse_size(text, expect):
    assert parse_size(text) == expect


@pytest.mark.parametrize("bad", ["lots", "-3KB", 0])
def test_parse_size_rejects(bad):
    with pytest.raises(ScenarioError):
        parse_size(bad)


def test_invalid_scenarios_fail_before_running(tmp_path):
    with pytest.raises(ScenarioError):
        Scenario.from_dict(_cfg(tmp_path, preset="hsr-999-A"))
    with pytest.raises(ScenarioError):
        Scenario.from_dict(_cfg(tmp_path, seeds=[]))
    with pytest.raises(ScenarioError):
        Scenario.from_dict(_cfg(tmp_path, duration=0))
    with pytest.raises(ScenarioError):
        Scenario.from_dict(_cfg(tmp_path, cca="reno"))
    assert not any(tmp_path.iterdir())


def test_profile_overrides_and_script(tmp_path):
    cfg = _cfg(tmp_path, overrides={
        "phy_jitter": 0.3,
        "ho_rates": {"I": 3.0},
        "scripted_handovers": [{"kind": "III", "start": 1.0, "end": 2.5}],
    })
    s = Scenario.from_dict(cfg)
    assert s.profile.phy_jitter == 0.3
    assert s.profile.ho_rates[HandoverKind.TYPE_I] == 3.0
    assert s.profile.scripted_handovers[0].ho_end == 2_500_000
    assert s.preset_name == "hsr-350-A"


@pytest.mark.parametrize("cap,expect", [("3MB", 3 << 20), ("512KB", 512 << 10), (200_000, 200_000)])
def test_buffer_capacity_accepts_size_strings(tmp_path, cap, expect):
    s = Scenario.from_dict(_cfg(tmp_path, overrides={"buffer_capacity": cap}))
    assert s.profile.buffer_capacity == expect


def test_buffer_capacity_must_be_finite(tmp_path):
    with pytest.raises(ScenarioError):
        Scenario.from_dict(_cfg(tmp_path, overrides={"buffer_capacity": "unbounded"}))


def test_output_root_env_applies_to_relative_dirs(tmp_path, monkeypatch):
    monkeypatch.setenv("HSRSIM_OUTPUT_ROOT", str(tmp_path))
    s = Scenario.from_dict(_cfg("rel/out"))
    assert s.output_dir == tmp_path / "rel" / "out"


def test_config_hash_is_stable_and_sensitive(tmp_path):
    a = Scenario.from_dict(_cfg(tmp_path / "a"))
    b = Scenario.from_dict(_cfg(tmp_path / "b"))
    c = Scenario.from_dict(_cfg(tmp_path, cca={"name": "bbrplus", "params": {"lambda": 0.5}}))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


def test_run_writes_every_artifact_and_is_reproducible(tmp_path):
    s1 = Scenario.from_dict(_cfg(tmp_path / "r1"))
    s2 = Scenario.from_dict(_cfg(tmp_path / "r2"))
    m1 = run_scenario(s1)
    m2 = run_scenario(s2)
    assert m1["config_hash"] == m2["config_hash"]
    assert len(m1["runs"]) == 2
    for r in m1["runs"]:
        assert (tmp_path / "r1" / r["trace"]).read_bytes() == (tmp_path / "r2" / r["trace"]).read_bytes()
        assert (tmp_path / "r1" / r["summary"]).exists()
    ens = json.loads((tmp_path / "r1" / m1["ensemble"]).read_text())
    per_seed = [json.loads((tmp_path / "r1" / r["summary"]).read_text())["goodput_mbps"] for r in m1["runs"]]
    assert ens["goodput_mbps"]["mean"] == pytest.approx(sum(per_seed) / len(per_seed))
    assert json.loads((tmp_path / "r1" / "manifest.json").read_text()) == m1


def test_parallel_run_matches_serial(tmp_path):
    serial = run_scenario(Scenario.from_dict(_cfg(tmp_path / "s")))
    par = run_scenario(Scenario.from_dict(_cfg(tmp_path / "p", workers=2)))
    for a, b in zip(serial["runs"], par["runs"]):
        assert (tmp_path / "s" / a["trace"]).read_bytes() == (tmp_path / "p" / b["trace"]).read_bytes()


def test_short_flow_preset(tmp_path):
    m = run_scenario(Scenario.from_dict(_cfg(tmp_path, flow_size="64KB", seeds=[3], duration=150)))
    trace = FlowTrace.read_csv(tmp_path / m["runs"][0]["trace"])
    summary = json.loads((tmp_path / m["runs"][0]["summary"]).read_text())
    assert trace.duration_us < 150_000_000
    assert summary["goodput_mbps"] == pytest.approx(64 * 1024 * 8 / trace.duration_us)


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ScenarioError):
        run_scenario(Scenario(preset("hsr-350-A"), CcaSpec("cubic"), [0], 5.0, output_dir=blocker / "sub"))


def test_compare_rules(tmp_path):
    a = run_scenario(Scenario.from_dict(_cfg(tmp_path / "a", cca="bbr")))
    b = run_scenario(Scenario.from_dict(_cfg(tmp_path / "b", cca={"name": "bbrplus", "params": {"lambda": 0.5}})))
    assert a and b
    rows = compare([tmp_path / "a", tmp_path / "b"])
    assert [r.label for r in rows] == ["bbr", "bbrplus(lambda=0.5)"]
    assert rows[0].goodput_diff == 0.0
    assert rows[0].rtt_p25 <= rows[0].rtt_p50 <= rows[0].rtt_p75
    same = compare([tmp_path / "a", tmp_path / "a"])
    assert all(r.goodput_diff == 0.0 for r in same)
    with pytest.raises(ScenarioError):
        compare([tmp_path / "a"])
    run_scenario(Scenario.from_dict(_cfg(tmp_path / "c", seeds=[5, 6])))
    with pytest.raises(ScenarioError):
        compare([tmp_path / "a", tmp_path / "c"])
    run_scenario(Scenario.from_dict(_cfg(tmp_path / "d", preset="hsr-300-A")))
    with pytest.raises(ScenarioError):
        compare([tmp_path / "a", tmp_path / "d"])


def test_cli_verbs(tmp_path, capsys):
    cfg = _write(tmp_path, "c.yaml", _cfg("out", duration=15))
    assert cli.main(["run", str(cfg)]) == 0
    out_dir = tmp_path / "out"
    assert (out_dir / "manifest.json").exists()
    assert cli.main(["analyze", str(out_dir / "trace-seed0.csv"), "--infer-start"]) == 0
    report = json.loads(capsys.readouterr().out.split("\n", 3)[-1])
    assert report["goodput_mbps"] > 0
    assert cli.main(["compare", str(out_dir), str(out_dir)]) == 0
    assert "Goodput" in capsys.readouterr().out
    assert cli.main(["presets"]) == 0
    assert "hsr-350-B" in capsys.readouterr().out


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    bad = _write(tmp_path, "bad.yaml", _cfg("out", preset="nowhere"))
    assert cli.main(["run", str(bad)]) != 0
    assert "unknown preset" in capsys.readouterr().err
    assert cli.main(["compare", str(tmp_path)]) != 0
    assert cli.main(["analyze", str(tmp_path / "missing.csv")]) != 0
