"""Pipeline stages.  Each reads its inputs from the run directory and writes
its outputs there, so any stage can be rerun on its own."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..crashsim import (
    KMH_TO_MPS,
    read_trace,
    reference_oracle,
    simulate_point,
    write_trace,
)
from ..doe import DOE_COLUMNS, DesignPoint, DoeMatrix, lhs_sample, persist_doe, read_doe
from ..errors import CrashLabError, MissingArtifact, StageError
from ..forming import forming_feasibility
from ..metrics import extract_metrics
from ..mlcore import (
    LEARNERS,
    Dataset,
    eval_metrics,
    feature_importance,
    grid_search,
    save_model,
    split_indices,
    write_predictions,
)
from ..symreg import evolve, write_front
from .config import RunConfig

STAGES = ("sample", "simulate", "extract", "tune", "train", "symreg", "report")

# Config prefixes each stage reads; a stage's stamp also covers its upstream stages.
STAGE_KEYS = {
    "sample": ("run.seed", "doe."),
    "simulate": ("run.data_source", "forming.", "material.", "crash."),
    "extract": ("run.noise_rel",),
    "tune": ("ml.",),
    "train": ("ml.",),
    "symreg": ("symreg.",),
    "report": ("report.",),
}
UPSTREAM = {
    "sample": (),
    "simulate": ("sample",),
    "extract": ("sample", "simulate"),
    "tune": ("sample", "simulate", "extract"),
    "train": ("sample", "simulate", "extract", "tune"),
    "symreg": ("sample", "simulate", "extract"),
    "report": ("sample", "simulate", "extract", "tune", "train", "symreg"),
}

FORMING_COLUMNS = DOE_COLUMNS + ("formed", "knockdown", "feasibility_score")
TARGET_COLUMNS = {"cle": "cle", "ea": "ea_J", "intrusion": "intrusion_mm", "decel": "decel_mps2"}
DATASET_COLUMNS = FORMING_COLUMNS + tuple(TARGET_COLUMNS.values())


def fmt9(x: float) -> str:
    return format(float(x), ".9g")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Path) -> Path:
    if not path.is_file() or path.stat().st_size == 0:
        raise MissingArtifact(f"required artifact {path} is missing or empty")
    return path


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# -- stamps -------------------------------------------------------------------------

def stage_digest(cfg: RunConfig, stage: str) -> str:
    prefixes = [p for s in UPSTREAM[stage] + (stage,) for p in STAGE_KEYS[s]]
    return cfg.digest(prefixes)


def is_current(out: Path, cfg: RunConfig, stage: str) -> bool:
    stamp = out / ".stamps" / f"{stage}.json"
    if not stamp.is_file():
        return False
    doc = json.loads(stamp.read_text())
    if doc.get("digest") != stage_digest(cfg, stage):
        return False
    for rel, digest in doc.get("outputs", {}).items():
        p = out / rel
        if not p.is_file() or sha256_file(p) != digest:
            return False
    return True


def write_stamp(out: Path, cfg: RunConfig, stage: str, outputs: list[Path]) -> None:
    doc = {
        "digest": stage_digest(cfg, stage),
        "outputs": {str(p.relative_to(out)): sha256_file(p) for p in sorted(outputs)},
    }
    _write_text(out / ".stamps" / f"{stage}.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def clear_downstream(out: Path, stage: str) -> None:
    for s in STAGES:
        if stage in UPSTREAM[s]:
            (out / ".stamps" / f"{s}.json").unlink(missing_ok=True)


# -- shared readers -----------------------------------------------------------------

def load_doe(out: Path, cfg: RunConfig) -> DoeMatrix:
    with open(_require(out / "doe.csv")) as fh:
        return read_doe(fh, cfg.space())


def load_forming(out: Path) -> list[dict]:
    with open(_require(out / "forming.csv")) as fh:
        return list(csv.DictReader(fh))


def load_dataset(out: Path, cfg: RunConfig) -> tuple[Dataset, list[DesignPoint]]:
    with open(_require(out / "dataset.csv")) as fh:
        rows = list(csv.DictReader(fh))
    space = cfg.space()
    points = [_point(r) for r in rows]
    X = np.array([p.features(space) for p in points]).reshape(len(points), 7)
    y = {t: np.array([float(r[col]) for r in rows]) for t, col in TARGET_COLUMNS.items()}
    ids = np.array([int(r["sample_id"]) for r in rows], dtype=int)
    return Dataset(X, y, sample_ids=ids), points


def _point(row: dict) -> DesignPoint:
    return DesignPoint(
        n_layers=int(row["n_layers"]), thickness=float(row["thickness_mm"]),
        orientation=row["orientation_set"], punch_velocity=float(row["punch_velocity_mps"]),
        layer_temp=float(row["layer_temp_C"]), tool_temp=float(row["tool_temp_C"]),
        air_temp=float(row["air_temp_C"]),
    )


# -- sample ---------------------------------------------------------------------------

def stage_sample(out: Path, cfg: RunConfig) -> list[Path]:
    m = lhs_sample(cfg.space(), cfg["doe.n_samples"], cfg["run.seed"])
    buf = io.StringIO()
    persist_doe(m, buf)
    path = out / "doe.csv"
    _write_text(path, buf.getvalue())
    return [path]


# -- simulate -------------------------------------------------------------------------

def _simulate_task(args):
    sid, point, forming, material, geometry, solver, v0, duration, dt_out, space = args
    try:
        outcome = forming_feasibility(point, forming, geometry)
        trace = simulate_point(point, outcome, material, geometry, solver,
                               v0=v0, duration=duration, dt_out=dt_out, space=space)
        buf = io.StringIO()
        write_trace(trace, buf)
        return sid, buf.getvalue(), None
    except CrashLabError as exc:
        return sid, None, f"{type(exc).__name__}: {exc}"


def stage_simulate(out: Path, cfg: RunConfig) -> list[Path]:
    doe = load_doe(out, cfg)
    forming, geometry = cfg.forming(), cfg.geometry()
    rows, formed = [], []
    lines = [",".join(FORMING_COLUMNS)]
    for sid, p in enumerate(doe.points):
        try:
            f = forming_feasibility(p, forming, geometry)
        except CrashLabError as exc:
            raise StageError("simulate", str(exc), sid) from None
        cells = _doe_cells(sid, p) + [str(int(f.feasible)), fmt9(f.knockdown), fmt9(f.feasibility_score)]
        lines.append(",".join(cells))
        if f.feasible:
            formed.append((sid, p))
    path = out / "forming.csv"
    _write_text(path, "\n".join(lines) + "\n")
    outputs = [path]
    trace_dir = out / "traces"
    for stale in trace_dir.glob("trace_*.csv"):
        stale.unlink()
    if cfg["run.data_source"] != "surrogate":
        return outputs
    trace_dir.mkdir(parents=True, exist_ok=True)
    common = (forming, cfg.material(), geometry, cfg.solver(), cfg["crash.v0_kmh"] * KMH_TO_MPS,
              cfg["crash.duration_ms"] * 1e-3, cfg["crash.dt_out_ms"] * 1e-3, cfg.space())
    tasks = [(sid, p) + common for sid, p in formed]
    workers = cfg["run.workers"]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_simulate_task, tasks, chunksize=max(1, len(tasks) // (4 * workers)))
            results = list(results)
    else:
        results = [_simulate_task(t) for t in tasks]
    for sid, text, err in results:  # in sample order
        if err is not None:
            raise StageError("simulate", err, sid)
        tp = trace_dir / f"trace_{sid:04d}.csv"
        tp.write_text(text)
        outputs.append(tp)
    return outputs


def _doe_cells(sid: int, p: DesignPoint) -> list[str]:
    g6 = lambda v: format(float(v), ".6g")
    return [str(sid), str(p.n_layers), g6(p.thickness), p.orientation, g6(p.punch_velocity),
            g6(p.layer_temp), g6(p.tool_temp), g6(p.air_temp)]


# -- extract --------------------------------------------------------------------------

def oracle_response(p: DesignPoint, sid: int, seed: int, noise_rel: float) -> dict[str, float]:
    """Closed-form responses, optionally with relative Gaussian noise.

    The noise stream for a sample is keyed on (seed, sample_id) so it does not
    depend on which other samples exist or which worker handles them.
    """
    y = reference_oracle(p).as_dict()
    if noise_rel > 0:
        z = np.random.default_rng(np.random.SeedSequence([seed, sid])).standard_normal(len(y))
        y = {k: v * (1.0 + noise_rel * zi) for (k, v), zi in zip(y.items(), z)}
    return y


def stage_extract(out: Path, cfg: RunConfig) -> list[Path]:
    rows = load_forming(out)
    source = cfg["run.data_source"]
    noise = cfg["run.noise_rel"] if source == "oracle_noisy" else 0.0
    lines = [",".join(DATASET_COLUMNS)]
    for r in rows:
        if r["formed"] != "1":
            continue
        sid = int(r["sample_id"])
        try:
            if source == "surrogate":
                with open(_require(out / "traces" / f"trace_{sid:04d}.csv")) as fh:
                    y = extract_metrics(read_trace(fh)).as_dict()
            else:
                y = oracle_response(_point(r), sid, cfg["run.seed"], noise)
        except MissingArtifact:
            raise
        except CrashLabError as exc:
            raise StageError("extract", f"{type(exc).__name__}: {exc}", sid) from None
        cells = [r[c] for c in FORMING_COLUMNS] + [fmt9(y[t]) for t in TARGET_COLUMNS]
        lines.append(",".join(cells))
    path = out / "dataset.csv"
    _write_text(path, "\n".join(lines) + "\n")
    return [path]


# -- tune / train ---------------------------------------------------------------------

def _split(ds: Dataset, cfg: RunConfig):
    if len(ds) < 2:
        raise StageError("train", f"dataset has {len(ds)} rows; at least 2 are needed")
    return split_indices(len(ds), cfg["ml.test_fraction"], cfg["run.seed"])


def _learner_kwargs(learner: str, cfg: RunConfig) -> dict:
    return {"seed": cfg["run.seed"]} if learner == "random_forest" else {}


def stage_tune(out: Path, cfg: RunConfig) -> list[Path]:
    ds, _ = load_dataset(out, cfg)
    train, _ = _split(ds, cfg)
    k = min(cfg["ml.cv_folds"], len(train))
    if k < 2:
        raise StageError("tune", f"only {len(train)} training rows; cross-validation needs 2")
    doc = {"n_train": int(len(train)), "cv_folds": k, "targets": {}}
    for target in cfg["ml.targets"]:
        y = ds.y[target][train]
        per = {}
        for learner in cfg["ml.learners"]:
            fixed = _learner_kwargs(learner, cfg)
            grid = cfg.grid(learner)
            fn = _Bound(LEARNERS[learner], fixed)
            try:
                best, rep, reports = grid_search(ds.X[train], y, grid, k, fn,
                                                 seed=cfg["run.seed"], workers=cfg["run.workers"])
            except CrashLabError as exc:
                raise StageError("tune", f"{target}/{learner}: {exc}") from None
            per[learner] = {
                "best_params": best,
                "cv": {"mae": rep.mae, "mape": rep.mape, "r2": rep.r2},
                "grid": [r.as_dict() for r in reports],
            }
        doc["targets"][target] = per
    path = out / "tuning.json"
    _write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return [path]


class _Bound:
    """Picklable learner with fixed keyword arguments."""

    def __init__(self, fn, fixed):
        self.fn, self.fixed = fn, fixed

    def __call__(self, X, y, **params):
        return self.fn(X, y, **self.fixed, **params)


def stage_train(out: Path, cfg: RunConfig) -> list[Path]:
    ds, _ = load_dataset(out, cfg)
    with open(_require(out / "tuning.json")) as fh:
        tuning = json.load(fh)
    train, test = _split(ds, cfg)
    final = cfg["ml.final_learner"]
    outputs, evaluation, pred_rows, imp_rows = [], {}, [], []
    for target in cfg["ml.targets"]:
        if target not in tuning["targets"]:
            raise MissingArtifact(f"tuning.json has no entry for target {target!r}")
        y = ds.y[target]
        evaluation[target] = {}
        for learner in cfg["ml.learners"]:
            params = tuning["targets"][target][learner]["best_params"]
            model = LEARNERS[learner](ds.X[train], y[train], feature_names=ds.feature_names,
                                      **_learner_kwargs(learner, cfg), **params)
            path = out / "models" / f"{target}_{learner}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as fh:
                save_model(model, fh)
            outputs.append(path)
            pred = model.predict(ds.X[test])
            try:
                rep = eval_metrics(y[test], pred).as_dict()
            except CrashLabError as exc:
                raise StageError("train", f"{target}/{learner}: {exc}") from None
            evaluation[target][learner] = {"params": params, "holdout": rep}
            if learner == final:
                pred_rows += [(sid, target, yt, yp) for sid, yt, yp in zip(ds.sample_ids[test], y[test], pred)]
                for name, v in feature_importance(model).items():
                    imp_rows.append((target, name, v))
    doc = {"final_learner": final, "n_train": int(len(train)), "n_test": int(len(test)),
           "targets": evaluation}
    p_eval = out / "evaluation.json"
    _write_text(p_eval, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    buf = io.StringIO()
    write_predictions(pred_rows, buf)
    p_pred = out / "predictions.csv"
    _write_text(p_pred, buf.getvalue())
    p_imp = out / "importance.csv"
    _write_text(p_imp, "target,feature,importance\n" + "".join(
        f"{t},{n},{v!r}\n" for t, n, v in imp_rows))
    return outputs + [p_eval, p_pred, p_imp]


# -- symbolic regression --------------------------------------------------------------

def stage_symreg(out: Path, cfg: RunConfig) -> list[Path]:
    ds, points = load_dataset(out, cfg)
    keep = [i for i, p in enumerate(points) if p.orientation == cfg["symreg.orientation"]]
    X = np.array([[points[i].symbols()[k] for k in "abcd"] for i in keep]).reshape(len(keep), 4)
    outputs = []
    for target in cfg["symreg.targets"]:
        try:
            front = evolve(X, ds.y[target][keep], cfg.symreg())
        except CrashLabError as exc:
            raise StageError("symreg", f"{target}: {exc}") from None
        buf = io.StringIO()
        write_front(front, buf)
        path = out / f"pareto_{target}.csv"
        _write_text(path, buf.getvalue())
        outputs.append(path)
    return outputs


# -- report ---------------------------------------------------------------------------

def stage_report(out: Path, cfg: RunConfig) -> list[Path]:
    from .report import emit_report

    return emit_report(out, cfg)


STAGE_FUNCS = {
    "sample": stage_sample,
    "simulate": stage_simulate,
    "extract": stage_extract,
    "tune": stage_tune,
    "train": stage_train,
    "symreg": stage_symreg,
    "report": stage_report,
}


# -- orchestration ----------------------------------------------------------------------

def write_manifest(out: Path, cfg: RunConfig) -> Path:
    files = {}
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out)
        if p.is_file() and rel.parts[0] != ".stamps" and rel.name != "manifest.json":
            files[str(rel)] = sha256_file(p)
    doc = {"config_hash": cfg.digest(), "seed": cfg["run.seed"], "files": files}
    path = out / "manifest.json"
    _write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def run_stage(out: Path, cfg: RunConfig, stage: str, force: bool = False) -> bool:
    """Run one stage unless its stamp is current; returns whether it ran."""
    if not force and is_current(out, cfg, stage):
        return False
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs = STAGE_FUNCS[stage](out, cfg)
    except (StageError, MissingArtifact):
        raise
    except CrashLabError as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from None
    except OSError as exc:
        raise StageError(stage, f"cannot write output: {exc}") from None
    clear_downstream(out, stage)
    write_stamp(out, cfg, stage, outputs)
    return True


def run_pipeline(cfg: RunConfig, out: Path | None = None, stages=STAGES, force: bool = False) -> Path:
    out = Path(out if out is not None else cfg["run.out"])
    for stage in stages:
        run_stage(out, cfg, stage, force=force)
    write_manifest(out, cfg)
    return out
