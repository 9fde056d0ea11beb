import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from familytune.cli import ConfigError, RunConfig, emit_manifest, load_manifest, main, parse_config

FAST = ["--pool-random", "32", "--pool-evolved", "32", "--cm-trees", "5"]


def test_tune_defaults(tmp_path):
    cfg = parse_config(["tune", "--model", "m.json", "--budget", "9900", "--policy", "foresee"])
    assert cfg.foresee_p == 0.25
    assert (cfg.model, cfg.budget, cfg.policy) == ("m.json", 9900, "foresee")
    assert (cfg.cm_trees, cfg.cm_depth, cfg.cm_lr, cfg.cm_min_leaf) == (50, 3, 0.1, 2)
    assert cfg.noise == 0.02 and cfg.t_measure == 1.0 and cfg.workers == 1


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"workers": 2, "seed": 7}))
    cfg = parse_config(["tune", "--config", str(path), "--workers", "4"])
    assert cfg.workers == 4 and cfg.seed == 7
    assert parse_config(["tune"], config_file=path).workers == 2


def test_p_range_and_conflicts():
    with pytest.raises(ConfigError, match="0 < p < 1"):
        parse_config(["tune", "--foresee-p", "1.5"])
    with pytest.raises(ConfigError, match="conflicts"):
        parse_config(["tune", "--policy", "monolithic", "--foresee-p", "0.3"])


def test_unknown_flag_and_keys(tmp_path, capsys):
    with pytest.raises(SystemExit):
        parse_config(["tune", "--turbo"])
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"wrokers": 2}))
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config(["tune", "--config", str(path)])
    path.write_text(json.dumps({"workers": "two"}))
    with pytest.raises(ConfigError, match="integer"):
        parse_config(["tune", "--config", str(path)])
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(["tune", "--config", str(tmp_path / "missing.json")])


def test_out_must_stay_inside_out_dir():
    with pytest.raises(ConfigError):
        parse_config(["tune", "--out", "../escape.csv"])
    with pytest.raises(ConfigError):
        parse_config(["tune", "--out", "/tmp/abs.csv"])


def test_manifest_roundtrip_and_missing_seed(tmp_path):
    cfg = parse_config(["bars", "--model", "tiny", "--seed", "3", "--starve", "1:8", "--samples", "64"])
    path = emit_manifest(cfg, tmp_path)
    assert load_manifest(path) == cfg
    doc = json.loads(path.read_text())
    assert doc["seed"] == 3 and doc["tool_version"] and len(doc["landscape_digest"]) == 64
    del doc["seed"]
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="no seed"):
        load_manifest(path)


def test_manifest_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        emit_manifest(RunConfig(model="tiny"), blocker / "sub")


def test_different_seeds_different_digests(tmp_path):
    a = json.loads(emit_manifest(RunConfig(model="tiny", seed=1), tmp_path / "a").read_text())
    b = json.loads(emit_manifest(RunConfig(model="tiny", seed=2), tmp_path / "b").read_text())
    assert a["landscape_digest"] != b["landscape_digest"]


def _files(root):
    return {os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs}


def test_tune_rerun_from_manifest_is_bitwise_identical(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["tune", "--model", "tiny", "--budget", "200", "--seed", "4", "--out-dir", "run1", *FAST]) == 0
    assert _files(tmp_path) == {f"run1/{n}" for n in ("curve.csv", "state.json", "families.csv", "landscape.csv", "budget_report.csv", "manifest.json")}
    assert main(["tune", "--config", "run1/manifest.json", "--out-dir", "run2"]) == 0
    assert (tmp_path / "run1/curve.csv").read_bytes() == (tmp_path / "run2/curve.csv").read_bytes()
    assert main(["report", "--state", "run1/state.json", "--out-dir", "rep"]) == 0
    assert {"rep/budget_report.csv", "rep/curve.dat", "rep/curve.gp"} <= _files(tmp_path)


def test_model_file_path(tmp_path):
    from familytune.fixtures import tiny_model
    from familytune.graph import save_model

    save_model(tiny_model(), tmp_path / "m.json")
    out = tmp_path / "out"
    assert main(["tune", "--model", str(tmp_path / "m.json"), "--budget", "100", "--out-dir", str(out), *FAST]) == 0
    assert main(["tune", "--model", str(tmp_path / "nope.json"), "--out-dir", str(out)]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["heatmap", "--model", "tiny", "--samples", "64"],
        ["bars", "--model", "tiny", "--samples", "64", "--starve", "0:8"],
        ["compare", "--model", "tiny", "--budget", "120", *FAST],
    ],
    ids=["heatmap", "bars", "compare"],
)
def test_other_commands_write_only_into_out_dir(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert main([*argv, "--out-dir", "o"]) == 0
    files = _files(tmp_path)
    assert files and all(f.startswith("o/") for f in files)
    assert "o/manifest.json" in files


def test_compare_check_exit_code(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    rc = main(["compare", "--model", "tiny", "--budget", "120", "--check", "--out-dir", "o", *FAST])
    ratio = float([l for l in (tmp_path / "o/summary.csv").read_text().splitlines() if l.startswith("1.0,")][0].split(",")[1])
    assert rc == (0 if ratio <= 1.0 else 1)


def test_bad_config_gives_exit_2(capsys):
    assert main(["tune", "--foresee-p", "2"]) == 2
    assert "0 < p < 1" in capsys.readouterr().err


configs = st.builds(
    RunConfig,
    command=st.sampled_from(["tune", "compare", "heatmap", "bars"]),
    model=st.sampled_from(["tiny", "bert_large_like"]),
    budget=st.one_of(st.none(), st.integers(1, 10**5)),
    foresee_p=st.floats(0.01, 0.99),
    cluster_algo=st.sampled_from(["core-op", "op-count", "op-sequence"]),
    potential=st.sampled_from(["greedy", "gradient"]),
    seed=st.integers(0, 2**31),
    workers=st.integers(1, 16),
    noise=st.floats(0, 0.2),
    cm_accelerated=st.booleans(),
    starve=st.lists(st.tuples(st.integers(0, 3), st.integers(1, 50)), max_size=2).map(tuple),
)


@settings(max_examples=25, deadline=None)
@given(cfg=configs)
def test_manifest_roundtrip_property(tmp_path_factory, cfg):
    cfg = cfg.validate()
    out = tmp_path_factory.mktemp("m")
    assert load_manifest(emit_manifest(cfg, out, digest="0" * 64)) == cfg
