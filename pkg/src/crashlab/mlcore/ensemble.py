"""Boosted and bagged tree ensembles, importance, and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from ..errors import InvalidArgument, ParseError
from .tree import Tree, TreeBuilder, check_xy, presort

KINDS = ("gbt", "gbt_regularized", "random_forest")
MODEL_FORMAT = "crashlab-ensemble"
MODEL_VERSION = 1


@dataclass
class Ensemble:
    kind: str
    trees: list[Tree]
    base_score: float = 0.0
    learning_rate: float = 1.0
    params: dict = field(default_factory=dict)
    feature_names: tuple[str, ...] = ()

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features if self.trees else len(self.feature_names)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.kind == "random_forest":
            out = np.zeros(X.shape[0])
            for tree in self.trees:
                out += tree.predict(X)
            return out / len(self.trees)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def feature_gain(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        for tree in self.trees:
            total += tree.feature_gain()
        return total


def _check_rate(learning_rate):
    if not 0.0 < learning_rate <= 1.0:
        raise InvalidArgument(f"learning_rate must lie in (0, 1], got {learning_rate}")


def fit_gradient_boosting(X, y, n_rounds=100, learning_rate=0.1, max_depth=3,
                          min_samples_leaf=1, reg_lambda=0.0, gamma=0.0,
                          regularized=False, feature_names=()) -> Ensemble:
    """Squared-error gradient boosting from a mean base score.

    ``regularized=True`` selects the second-order variant (leaf weights
    ``G/(H + lambda)``, split gain penalised by ``gamma``); otherwise trees
    are plain CART on the residuals and lambda/gamma must stay zero.
    """
    X, y = check_xy(X, y)
    if int(n_rounds) != n_rounds or n_rounds < 1:
        raise InvalidArgument(f"n_rounds must be a positive integer, got {n_rounds}")
    _check_rate(learning_rate)
    if not regularized and (reg_lambda or gamma):
        raise InvalidArgument("lambda/gamma only apply to the regularized variant")
    builder = TreeBuilder(
        X, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
        reg_lambda=reg_lambda, gamma=gamma, second_order=regularized,
    )
    base = float(np.mean(y))
    pred = np.full(len(y), base)
    trees = []
    for _ in range(int(n_rounds)):
        tree = builder.fit(y - pred)
        pred += learning_rate * tree.predict(X)
        trees.append(tree)
    params = dict(n_rounds=int(n_rounds), learning_rate=learning_rate, max_depth=max_depth,
                  min_samples_leaf=min_samples_leaf)
    if regularized:
        params.update(reg_lambda=reg_lambda, gamma=gamma)
    return Ensemble(
        kind="gbt_regularized" if regularized else "gbt",
        trees=trees, base_score=base, learning_rate=learning_rate,
        params=params, feature_names=tuple(feature_names),
    )


def fit_regularized_boosting(X, y, **params) -> Ensemble:
    return fit_gradient_boosting(X, y, regularized=True, **params)


def fit_random_forest(X, y, n_trees=100, max_depth=None, min_samples_leaf=1,
                      feature_subsample=0.6, bootstrap=True, seed=0,
                      feature_names=()) -> Ensemble:
    """Bagged CART trees with a random feature subset at every split.

    Tree ``t`` draws from its own generator seeded with ``(seed, t)``, so the
    forest does not depend on the order trees are built in.
    """
    X, y = check_xy(X, y)
    if int(n_trees) != n_trees or n_trees < 1:
        raise InvalidArgument(f"n_trees must be a positive integer, got {n_trees}")
    if not 0.0 < feature_subsample <= 1.0:
        raise InvalidArgument("feature_subsample must lie in (0, 1]")
    n, p = X.shape
    max_features = max(1, int(round(feature_subsample * p)))
    shared_order = None if bootstrap else presort(X)
    trees = []
    for t in range(int(n_trees)):
        rng = np.random.default_rng([int(seed), t])
        if bootstrap:
            rows = rng.integers(0, n, size=n)
            Xt, yt, order = X[rows], y[rows], None
        else:
            Xt, yt, order = X, y, shared_order
        builder = TreeBuilder(Xt, order=order, max_depth=max_depth,
                              min_samples_leaf=min_samples_leaf,
                              max_features=max_features, rng=rng)
        trees.append(builder.fit(yt))
    params = dict(n_trees=int(n_trees), max_depth=max_depth, min_samples_leaf=min_samples_leaf,
                  feature_subsample=feature_subsample, bootstrap=bootstrap, seed=int(seed))
    return Ensemble(kind="random_forest", trees=trees, params=params,
                    feature_names=tuple(feature_names))


LEARNERS = {
    "gbt": fit_gradient_boosting,
    "gbt_regularized": fit_regularized_boosting,
    "random_forest": fit_random_forest,
}


def feature_importance(model: Ensemble, names=None) -> dict[str, float]:
    """Total split gain per feature, normalised to sum to one (all zero without splits)."""
    gain = model.feature_gain()
    names = tuple(names or model.feature_names or (f"x{i}" for i in range(len(gain))))
    total = gain.sum()
    if total > 0:
        gain = gain / total
    return {name: float(v) for name, v in zip(names, gain)}


# -- model files -------------------------------------------------------------------

def save_model(model: Ensemble, sink: IO[str]) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "params": model.params,
        "feature_names": list(model.feature_names),
        "trees": [t.to_dict() for t in model.trees],
    }
    json.dump(doc, sink, sort_keys=True, separators=(",", ":"))
    sink.write("\n")


def load_model(source: IO[str]) -> Ensemble:
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a crashlab model file")
    if doc.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported model version {doc.get('version')!r}")
    if doc.get("kind") not in KINDS:
        raise ParseError(f"unknown model kind {doc.get('kind')!r}")
    if not doc.get("trees"):
        raise ParseError("model file holds no trees")
    return Ensemble(
        kind=doc["kind"],
        trees=[Tree.from_dict(t) for t in doc["trees"]],
        base_score=float(doc["base_score"]),
        learning_rate=float(doc["learning_rate"]),
        params=doc["params"],
        feature_names=tuple(doc["feature_names"]),
    )
