"""Config parsing and validation, report exports, runner determinism, CLI."""

import json

import pytest
import yaml
from click.testing import CliRunner

from fedsim.cli import main
from fedsim.config import CONFIG_VERSION, parse_config
from fedsim.errors import ConfigError
from fedsim.pipeline import LatencySample
from fedsim.report import (
    SAMPLES_HEADER,
    export_samples,
    export_summary,
    parse_summary,
)
from fedsim.runner import run_scenario


def base_doc(**overrides):
    doc = {
        "version": CONFIG_VERSION,
        "name": "mini",
        "seed": 7,
        "duration_min": 0.05,
        "warmup_s": 0,
        "exposure": "overlay-tunnel",
        "local_latency_ms": 0.5,
        "provider_profile": "paper-v1",
        "clusters": [
            {"name": "alpha", "distribution": "kubeadm-like", "node_count": 1,
             "base_cpu": 0.2, "base_mem": 0.5},
            {"name": "beta", "distribution": "k3s-like", "node_count": 1,
             "base_cpu": 0.2, "base_mem": 0.5},
        ],
        "namespaces": [{"cluster": "alpha", "name": "xr-app"}],
        "links": [{"a": "alpha", "b": "beta", "latency_ms": 5.0,
                   "bandwidth_mbps": 1000, "loss_rate": 0.0}],
        "peerings": [{"consumer": "alpha", "provider": "beta",
                      "mode": "unidirectional", "share": 0.5}],
        "offloads": [{"origin": "alpha", "namespace": "xr-app",
                      "targets": ["beta"], "policy": "both"}],
        "pipeline": {
            "namespace": "xr-app",
            "frame_interval_ms": 50.0,
            "frame_bytes": 10000,
            "renderer": {"cluster": "alpha", "process_delay_ms": 5.0,
                         "cpu_demand": 0.1, "mem_demand": 0.05},
            "streamer": {"cluster": "beta",
                         "buffer_delay_ms": {"uniform": [10.0, 30.0]},
                         "cpu_demand": 0.05, "mem_demand": 0.03},
            "client": {"cluster": "alpha", "decode_delay_ms": 2.0,
                       "cpu_demand": 0.04, "mem_demand": 0.02},
        },
    }
    doc.update(overrides)
    return doc


def test_parse_roundtrip_of_fields():
    config = parse_config(base_doc(), apply_env=False)
    assert config.name == "mini"
    assert config.seed == 7
    assert config.exposure == "overlay-tunnel"
    assert [c.name for c in config.clusters] == ["alpha", "beta"]
    assert config.pipeline.streamer.delay.kind == "uniform"
    assert config.links[0].latency.a == 5.0


def test_version_is_mandatory_and_checked():
    doc = base_doc(version="fedsim/v2")
    with pytest.raises(ConfigError) as err:
        parse_config(doc, apply_env=False)
    assert err.value.path == "version"


def test_unknown_cluster_in_pipeline_reports_field_path():
    doc = base_doc()
    doc["pipeline"]["streamer"]["cluster"] = "ghost"
    with pytest.raises(ConfigError) as err:
        parse_config(doc, apply_env=False)
    assert err.value.path == "pipeline.streamer.cluster"


def test_nonpositive_duration_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(base_doc(duration_min=0), apply_env=False)
    assert err.value.path == "duration_min"


def test_bad_distribution_spec_reports_path():
    doc = base_doc()
    doc["links"][0]["latency_ms"] = {"weird": 1}
    with pytest.raises(ConfigError) as err:
        parse_config(doc, apply_env=False)
    assert err.value.path == "links[0].latency_ms"


def test_unknown_offload_target_rejected():
    doc = base_doc()
    doc["offloads"][0]["targets"] = ["ghost"]
    with pytest.raises(ConfigError) as err:
        parse_config(doc, apply_env=False)
    assert err.value.path == "offloads[0].targets"


def test_env_var_overrides_config_seed(monkeypatch):
    monkeypatch.setenv("FEDSIM_SEED", "99")
    config = parse_config(base_doc(), apply_env=True)
    assert config.seed == 99
    monkeypatch.delenv("FEDSIM_SEED")
    config = parse_config(base_doc(), apply_env=True)
    assert config.seed == 7


def test_inline_provider_profiles():
    doc = base_doc(provider_profile={
        "kubeadm-like": {"vm_create_s": 1, "cp_bootstrap_s": 2,
                         "worker_bootstrap_s": 1, "readiness_check_s": 1},
        "k3s-like": {"vm_create_s": 1, "cp_bootstrap_s": 1,
                     "worker_bootstrap_s": 1, "readiness_check_s": 1},
    })
    config = parse_config(doc, apply_env=False)
    assert config.profiles["kubeadm-like"].cp_bootstrap.a == 2


# -- runner + exports ---------------------------------------------------------


def test_same_config_and_seed_exports_identical_bytes():
    config_a = parse_config(base_doc(), apply_env=False)
    config_b = parse_config(base_doc(), apply_env=False)
    ra = run_scenario(config_a)
    rb = run_scenario(config_b)
    assert export_summary(ra.report) == export_summary(rb.report)
    assert export_samples(ra.samples) == export_samples(rb.samples)


def test_different_seed_changes_samples():
    ra = run_scenario(parse_config(base_doc(), apply_env=False))
    rb = run_scenario(parse_config(base_doc(seed=8), apply_env=False))
    assert export_samples(ra.samples) != export_samples(rb.samples)


def test_summary_roundtrip_is_identity():
    result = run_scenario(parse_config(base_doc(), apply_env=False))
    blob = export_summary(result.report)
    assert parse_summary(blob) == result.report
    assert export_summary(parse_summary(blob)) == blob


def test_samples_table_shape():
    samples = [LatencySample(0, 0, 43_500),
               LatencySample(1, 50_000, 93_511),
               LatencySample(2, 100_000, 143_000)]
    blob = export_samples(samples)
    text = blob.decode("utf-8")
    lines = text.split("\n")
    assert lines[0] == SAMPLES_HEADER
    assert len(lines) == 5  # header + 3 rows + trailing newline
    assert lines[1] == "0,0.000,43.500,43.500"
    assert lines[2] == "1,50.000,93.511,43.511"
    assert export_samples(samples) == blob  # deterministic re-export


def test_report_without_pipeline_flags_no_data():
    doc = base_doc()
    del doc["pipeline"]
    result = run_scenario(parse_config(doc, apply_env=False))
    report = result.report
    assert report.latency.n == 0
    assert report.frames.generated == 0
    assert report.qos.no_data and not report.qos.passed
    blob = json.loads(export_summary(report))
    assert blob["latency"] == {"n": 0}


def test_warmup_discard_shrinks_measured_n():
    doc = base_doc(duration_min=0.1, warmup_s=3)
    result = run_scenario(parse_config(doc, apply_env=False))
    assert result.report.frames.consumed > result.report.latency.n > 0


# -- CLI ------------------------------------------------------------------------


def write_scenario(tmp_path, doc):
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_cli_run_writes_report_and_samples(tmp_path):
    runner = CliRunner()
    scenario = write_scenario(tmp_path, base_doc())
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--scenario", str(scenario),
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = parse_summary((out / "report.json").read_bytes())
    assert report.scenario == "mini"
    table = (out / "samples.csv").read_text(encoding="utf-8")
    assert table.startswith(SAMPLES_HEADER + "\n")
    assert "\r" not in table


def test_cli_accepts_packaged_scenario_names(tmp_path):
    runner = CliRunner()
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--scenario", "xr-target",
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert parse_summary((out / "report.json").read_bytes()).qos.passed


def test_cli_seed_flag_beats_env(tmp_path, monkeypatch):
    runner = CliRunner()
    scenario = write_scenario(tmp_path, base_doc())
    monkeypatch.setenv("FEDSIM_SEED", "55")
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--scenario", str(scenario),
                                  "--seed", "33", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert parse_summary((out / "report.json").read_bytes()).seed == 33


def test_cli_env_beats_config_file(tmp_path, monkeypatch):
    runner = CliRunner()
    scenario = write_scenario(tmp_path, base_doc())
    monkeypatch.setenv("FEDSIM_SEED", "55")
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--scenario", str(scenario),
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert parse_summary((out / "report.json").read_bytes()).seed == 55


def test_cli_config_error_exits_2(tmp_path):
    runner = CliRunner()
    doc = base_doc()
    doc["pipeline"]["streamer"]["cluster"] = "ghost"
    scenario = write_scenario(tmp_path, doc)
    result = runner.invoke(main, ["run", "--scenario", str(scenario),
                                  "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "pipeline.streamer.cluster" in result.output


def test_cli_repeat_pools_runs(tmp_path):
    runner = CliRunner()
    scenario = write_scenario(tmp_path, base_doc())
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--scenario", str(scenario),
                                  "--out", str(out), "--repeat", "2"])
    assert result.exit_code == 0, result.output
    pooled = json.loads((out / "pooled.json").read_text())
    assert pooled["seeds"] == [7, 8]
    assert pooled["pooled"]["n"] == sum(r["n"] for r in pooled["runs"])
    assert (out / "seed-7" / "report.json").exists()
    assert (out / "seed-8" / "samples.csv").exists()


def test_cli_report_renders_summary(tmp_path):
    runner = CliRunner()
    scenario = write_scenario(tmp_path, base_doc())
    out = tmp_path / "out"
    assert runner.invoke(main, ["run", "--scenario", str(scenario),
                                "--out", str(out)]).exit_code == 0
    result = runner.invoke(main, ["report", "--in", str(out)])
    assert result.exit_code == 0, result.output
    assert "scenario mini" in result.output
    assert "qos @ 15ms" in result.output


def test_cli_calibrate_exit_codes(monkeypatch):
    from fedsim import cli
    from fedsim.calibration import CheckResult

    runner = CliRunner()
    monkeypatch.setattr(cli, "run_checks",
                        lambda cache: [CheckResult("x", True, "ok")])
    assert runner.invoke(main, ["calibrate", "--check"]).exit_code == 0
    monkeypatch.setattr(cli, "run_checks",
                        lambda cache: [CheckResult("x", False, "bad")])
    assert runner.invoke(main, ["calibrate"]).exit_code == 0  # report only
    assert runner.invoke(main, ["calibrate", "--check"]).exit_code == 3


def test_packaged_scenarios_parse():
    from fedsim.calibration import SCENARIO_NAMES, packaged_scenario
    for name in SCENARIO_NAMES + ("xr-target",):
        config = packaged_scenario(name)
        assert config.name == name
        assert config.duration_min > 0
