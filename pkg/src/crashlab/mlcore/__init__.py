from .ensemble import (
    KINDS,
    LEARNERS,
    Ensemble,
    feature_importance,
    fit_gradient_boosting,
    fit_random_forest,
    fit_regularized_boosting,
    load_model,
    save_model,
)
from .tree import Tree, fit_regression_tree
from .validation import (
    DEFAULT_GRIDS,
    TARGETS,
    CvReport,
    Dataset,
    EvalReport,
    eval_metrics,
    expand_grid,
    grid_search,
    kfold_cv,
    kfold_indices,
    read_predictions,
    split_indices,
    split_sizes,
    train_test_split,
    write_predictions,
)

__all__ = [
    "KINDS", "LEARNERS", "Ensemble", "feature_importance", "fit_gradient_boosting",
    "fit_random_forest", "fit_regularized_boosting", "load_model", "save_model",
    "Tree", "fit_regression_tree", "DEFAULT_GRIDS", "TARGETS", "CvReport", "Dataset",
    "EvalReport", "eval_metrics", "expand_grid", "grid_search", "kfold_cv", "kfold_indices",
    "read_predictions", "split_indices", "split_sizes", "train_test_split", "write_predictions",
]
