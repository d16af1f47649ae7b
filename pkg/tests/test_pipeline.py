import csv
import json

import numpy as np
import pytest

from crashlab.crashsim import reference_oracle
from crashlab.doe import DesignPoint
from crashlab.errors import ConfigError, MissingArtifact, SolverError, StageError
from crashlab.pipeline import RunConfig, run_pipeline, run_stage
from crashlab.pipeline import stages
from crashlab.pipeline.cli import main
from crashlab.pipeline.report import parity_plot

TINY = {
    "doe.n_samples": 30,
    "ml.gbt.n_rounds": (20,),
    "ml.gbt.max_depth": (2,),
    "ml.gbt.learning_rate": (0.3,),
    "ml.gbt_regularized.n_rounds": (20,),
    "ml.gbt_regularized.max_depth": (2, 3),
    "ml.gbt_regularized.learning_rate": (0.3,),
    "ml.gbt_regularized.reg_lambda": (1.0,),
    "ml.random_forest.n_trees": (10,),
    "ml.random_forest.max_depth": (3,),
    "ml.cv_folds": 3,
    "symreg.population": 20,
    "symreg.generations": 2,
}


def tiny(**extra):
    over = dict(TINY)
    over.update({k.replace("__", "."): v for k, v in extra.items()})
    return RunConfig.load(overrides=over)


def write_cfg(path, **kv):
    path.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return path


@pytest.fixture(scope="module")
def oracle_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("oracle")
    cfg = tiny(doe__n_samples=50, run__data_source="oracle")
    run_pipeline(cfg, out)
    return out, cfg


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# -- configuration --------------------------------------------------------------------

def test_defaults_validate():
    cfg = RunConfig.load()
    assert cfg["doe.n_samples"] == 400 and cfg["run.seed"] == 42
    assert cfg.symreg().seed == 42
    assert cfg.grid("gbt") == {"learning_rate": [0.05, 0.1, 0.3], "max_depth": [2, 3, 4],
                               "n_rounds": [100, 300]}


def test_config_file_parsing(tmp_path):
    p = write_cfg(tmp_path / "a.cfg", **{"doe.n_samples": "12", "ml.targets": "ea, cle",
                                         "run.data_source": "oracle_noisy"})
    cfg = RunConfig.load(p)
    assert cfg["doe.n_samples"] == 12
    assert cfg["ml.targets"] == ("ea", "cle")


def test_unknown_key_names_line(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("# comment\ndoe.n_samples = 5\ndoe.n_sampels = 5\n")
    with pytest.raises(ConfigError, match="bad.cfg:3.*doe.n_sampels"):
        RunConfig.load(p)


@pytest.mark.parametrize("key,value", [
    ("doe.n_samples", "0"), ("run.noise_rel", "-0.1"), ("doe.n_samples", "many"),
    ("run.data_source", "fea"), ("ml.targets", "cle, mass"), ("doe.thickness_min", "0.9"),
])
def test_invalid_values_rejected(tmp_path, key, value):
    with pytest.raises(ConfigError):
        RunConfig.load(write_cfg(tmp_path / "c.cfg", **{key: value}))


def test_digest_ignores_workers_and_out():
    a = RunConfig.load(overrides={"run.workers": 1, "run.out": "x"})
    b = RunConfig.load(overrides={"run.workers": 8, "run.out": "y"})
    c = RunConfig.load(overrides={"run.seed": 43})
    assert a.digest() == b.digest() != c.digest()


# -- oracle run -----------------------------------------------------------------------

def test_attrition_bookkeeping(oracle_run):
    out, cfg = oracle_run
    forming = read_rows(out / "forming.csv")
    data = read_rows(out / "dataset.csv")
    assert len(forming) == cfg["doe.n_samples"]
    formed = [r for r in forming if r["formed"] == "1"]
    assert len(formed) + sum(r["formed"] == "0" for r in forming) == len(forming)
    assert [r["sample_id"] for r in data] == [r["sample_id"] for r in formed]
    assert list(data[0]) == list(stages.DATASET_COLUMNS)


def test_ten_samples_oracle(tmp_path):
    cfg = tiny(doe__n_samples=10, run__data_source="oracle")
    for s in ("sample", "simulate", "extract"):
        run_stage(tmp_path, cfg, s)
    rows = read_rows(tmp_path / "dataset.csv")
    assert 0 < len(rows) <= 10
    for r in rows:
        p = stages._point(r)
        y = reference_oracle(p).as_dict()
        for t, col in stages.TARGET_COLUMNS.items():
            assert float(r[col]) == pytest.approx(y[t], rel=1e-8)
    assert not (tmp_path / "traces").exists()


def test_noise_is_keyed_per_sample():
    p = DesignPoint(8, 0.25, "B", 5.0, 300.0, 120.0, 20.0)
    clean = reference_oracle(p).as_dict()
    assert stages.oracle_response(p, 3, 42, 0.0) == clean
    a = stages.oracle_response(p, 3, 42, 0.01)
    assert a == stages.oracle_response(p, 3, 42, 0.01)
    assert a != stages.oracle_response(p, 4, 42, 0.01)
    for t in clean:
        assert abs(a[t] / clean[t] - 1.0) < 0.06


def test_importance_sums_to_one(oracle_run):
    out, cfg = oracle_run
    rows = read_rows(out / "importance.csv")
    for t in cfg["ml.targets"]:
        total = sum(float(r["importance"]) for r in rows if r["target"] == t)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_run_outputs_and_manifest(oracle_run):
    out, cfg = oracle_run
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["config_hash"] == cfg.digest()
    for rel, digest in manifest["files"].items():
        assert stages.sha256_file(out / rel) == digest
    files = set(manifest["files"])
    for t in cfg["ml.targets"]:
        assert f"report/parity_{t}.svg" in files and f"pareto_{t}.csv" in files
        for learner in cfg["ml.learners"]:
            assert f"models/{t}_{learner}.json" in files
    assert "report/summary.csv" in files
    evaluation = json.loads((out / "evaluation.json").read_text())
    assert evaluation["n_train"] + evaluation["n_test"] == len(read_rows(out / "dataset.csv"))


def test_rerun_is_identical_and_resumes(oracle_run, tmp_path):
    out, cfg = oracle_run
    before = (out / "manifest.json").read_bytes()
    assert run_stage(out, cfg, "train") is False
    run_pipeline(cfg, tmp_path)
    a = json.loads(before)["files"]
    b = json.loads((tmp_path / "manifest.json").read_text())["files"]
    assert a == b


def test_config_change_invalidates_downstream(tmp_path):
    cfg = tiny(run__data_source="oracle")
    for s in ("sample", "simulate", "extract"):
        run_stage(tmp_path, cfg, s)
    noisy = tiny(run__data_source="oracle", run__noise_rel=0.05)
    assert run_stage(tmp_path, noisy, "sample") is False
    assert run_stage(tmp_path, noisy, "extract") is True


def test_tampered_output_reruns(tmp_path):
    cfg = tiny(run__data_source="oracle")
    run_stage(tmp_path, cfg, "sample")
    (tmp_path / "doe.csv").write_text("garbage")
    assert run_stage(tmp_path, cfg, "sample") is True


# -- surrogate run --------------------------------------------------------------------

def test_worker_count_independence(tmp_path):
    outs = []
    for w in (1, 2):
        cfg = tiny(doe__n_samples=12, run__workers=w)
        d = tmp_path / f"w{w}"
        for s in ("sample", "simulate", "extract"):
            run_stage(d, cfg, s)
        outs.append(d)
    assert (outs[0] / "dataset.csv").read_bytes() == (outs[1] / "dataset.csv").read_bytes()
    traces = sorted(p.name for p in (outs[0] / "traces").iterdir())
    formed = [r["sample_id"] for r in read_rows(outs[0] / "forming.csv") if r["formed"] == "1"]
    assert traces == [f"trace_{int(s):04d}.csv" for s in formed]


def test_solver_failure_names_sample(tmp_path, monkeypatch):
    cfg = tiny(doe__n_samples=12)
    run_stage(tmp_path, cfg, "sample")

    def boom(p, f, *a, **kw):
        raise SolverError("diverged")

    monkeypatch.setattr(stages, "simulate_point", boom)
    with pytest.raises(StageError) as info:
        run_stage(tmp_path, cfg, "simulate")
    assert info.value.stage == "simulate"
    forming = read_rows(tmp_path / "forming.csv")
    formed = next(int(r["sample_id"]) for r in forming if r["formed"] == "1")
    assert info.value.sample_id == formed
    assert f"sample {formed}" in str(info.value)


# -- report ---------------------------------------------------------------------------

def test_perfect_parity_annotation(tmp_path):
    y = np.linspace(1.0, 5.0, 9)
    path = parity_plot("ea", y, y, tmp_path / "p.svg")
    text = path.read_text()
    assert "R² = 1.000" in text
    again = parity_plot("ea", y, y, tmp_path / "q.svg")
    assert again.read_bytes() == path.read_bytes()


def test_empty_model_is_missing_artifact(oracle_run, tmp_path):
    out, cfg = oracle_run
    import shutil

    copy = tmp_path / "run"
    shutil.copytree(out, copy)
    (copy / "models" / "ea_gbt.json").write_text("")
    with pytest.raises(MissingArtifact, match="ea_gbt.json"):
        run_stage(copy, cfg, "report", force=True)


def test_missing_upstream_is_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifact, match="dataset.csv"):
        run_stage(tmp_path, tiny(), "train")


# -- CLI ------------------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    bad = write_cfg(tmp_path / "bad.cfg", **{"nope.key": "1"})
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["train", "--out", str(tmp_path / "empty")]) == 3
    assert "dataset.csv" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["sample", "--out", str(blocker / "sub")]) == 3


def test_cli_stage_sequence(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg", **{"doe.n_samples": "8", "run.data_source": "oracle"})
    out = tmp_path / "o"
    for stage in ("sample", "simulate", "extract"):
        assert main([stage, "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert "extract: done" in capsys.readouterr().out
    assert main(["--config", str(cfg), "--out", str(out), "--seed", "5", "extract"]) == 0
    assert "extract: up to date" in capsys.readouterr().out
    assert "# seed=5" in (out / "doe.csv").read_text()
    assert json.loads((out / "manifest.json").read_text())["seed"] == 5
