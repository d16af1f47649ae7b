"""Static SVG and CSV report built from the artifacts of a finished run."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..crashsim import read_trace  # noqa: E402
from ..errors import MissingArtifact  # noqa: E402
from ..mlcore import load_model, read_predictions  # noqa: E402
from ..symreg import read_front  # noqa: E402
from .config import RunConfig  # noqa: E402

plt.rcParams["svg.hashsalt"] = "crashlab"  # stable element ids
UNITS = {"cle": "-", "ea": "J", "intrusion": "mm", "decel": "m/s^2"}


def _require(path: Path) -> Path:
    if not path.is_file() or path.stat().st_size == 0:
        raise MissingArtifact(f"required artifact {path} is missing or empty")
    return path


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def r2_score(y, p) -> float:
    y, p = np.asarray(y, float), np.asarray(p, float)
    ss = float(np.sum((y - y.mean()) ** 2))
    return float("nan") if ss == 0.0 else 1.0 - float(np.sum((y - p) ** 2)) / ss


def parity_plot(target: str, y, p, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(y, p, s=12, alpha=0.8)
    lo, hi = float(min(np.min(y), np.min(p))), float(max(np.max(y), np.max(p)))
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel(f"simulated {target} [{UNITS[target]}]")
    ax.set_ylabel(f"predicted {target} [{UNITS[target]}]")
    ax.text(0.05, 0.92, f"R² = {r2_score(y, p):.3f}", transform=ax.transAxes)
    fig.tight_layout()
    return _save(fig, path)


def importance_plot(rows: list[tuple[str, str, float]], path: Path) -> Path:
    targets = list(dict.fromkeys(t for t, _, _ in rows))
    features = list(dict.fromkeys(f for _, f, _ in rows))
    vals = {(t, f): v for t, f, v in rows}
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(targets), 1)
    x = np.arange(len(features))
    for i, t in enumerate(targets):
        ax.bar(x + i * width, [vals.get((t, f), 0.0) for f in features], width, label=t)
    ax.set_xticks(x + 0.4 - width / 2, features, rotation=30, ha="right")
    ax.set_ylabel("normalised gain")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def trace_plot(trace, sid: int, path: Path) -> Path:
    t = trace.time * 1e3
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    a1.plot(t, trace.force * 1e-3)
    a1.set_ylabel("contact force [kN]")
    a1.set_title(f"sample {sid}")
    a2.plot(t, trace.kinetic_energy, label="kinetic")
    a2.plot(t, trace.internal_energy, label="internal")
    a2.plot(t, trace.dissipated_energy, label="dissipated")
    a2.plot(t, trace.kinetic_energy + trace.internal_energy + trace.dissipated_energy, "k--", label="total")
    a2.set_xlabel("time [ms]")
    a2.set_ylabel("energy [J]")
    a2.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def pareto_plot(target: str, members, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.step([m.complexity for m in members], [m.mae for m in members], where="post", marker="o")
    ax.set_yscale("log")
    ax.set_xlabel("complexity [nodes]")
    ax.set_ylabel(f"holdout MAE [{UNITS[target]}]")
    ax.set_title(target)
    fig.tight_layout()
    return _save(fig, path)


def emit_report(out: Path, cfg: RunConfig) -> list[Path]:
    out = Path(out)
    rep = out / "report"
    outputs = []
    final = cfg["ml.final_learner"]

    for target in cfg["ml.targets"]:
        for learner in cfg["ml.learners"]:
            with open(_require(out / "models" / f"{target}_{learner}.json")) as fh:
                load_model(fh)
    with open(_require(out / "evaluation.json")) as fh:
        evaluation = json.load(fh)
    with open(_require(out / "predictions.csv")) as fh:
        preds = read_predictions(fh)

    summary = ["target,learner,mae,mape,r2"]
    for target, per in evaluation["targets"].items():
        for learner, doc in per.items():
            h = doc["holdout"]
            summary.append(f"{target},{learner},{h['mae']!r},{h['mape']!r},{h['r2']!r}")
    path = rep / "summary.csv"
    rep.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(summary) + "\n")
    outputs.append(path)

    for target in cfg["ml.targets"]:
        rows = [(yt, yp) for _, t, yt, yp in preds if t == target]
        if not rows:
            raise MissingArtifact(f"predictions.csv has no rows for target {target!r}")
        y, p = map(np.array, zip(*rows))
        outputs.append(parity_plot(target, y, p, rep / f"parity_{target}.svg"))

    with open(_require(out / "importance.csv")) as fh:
        imp = [(r["target"], r["feature"], float(r["importance"])) for r in csv.DictReader(fh)]
    outputs.append(importance_plot(imp, rep / f"importance_{final}.svg"))

    traces = sorted((out / "traces").glob("trace_*.csv"))
    if cfg["run.data_source"] == "surrogate" and traces:
        sid = cfg["report.trace_sample"]
        src = traces[0] if sid < 0 else out / "traces" / f"trace_{sid:04d}.csv"
        sid = int(src.stem.split("_")[1])
        with open(_require(src)) as fh:
            outputs.append(trace_plot(read_trace(fh), sid, rep / f"trace_{sid:04d}.svg"))

    for target in cfg["symreg.targets"]:
        with open(_require(out / f"pareto_{target}.csv")) as fh:
            members = read_front(fh)
        outputs.append(pareto_plot(target, members, rep / f"pareto_{target}.svg"))
    return outputs
