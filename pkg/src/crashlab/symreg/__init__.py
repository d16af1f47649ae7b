from .expr import (
    VARIABLES,
    Expr,
    binary,
    const,
    eval_expr,
    neg,
    parse_infix,
    square,
    to_infix,
    var,
)
from .gp import (
    FrontMember,
    ParetoFront,
    SymregConfig,
    evolve,
    fit_constants,
    linear_scale,
    read_front,
    write_front,
)

__all__ = [
    "VARIABLES", "Expr", "binary", "const", "eval_expr", "neg", "parse_infix", "square",
    "to_infix", "var", "FrontMember", "ParetoFront", "SymregConfig", "evolve",
    "fit_constants", "linear_scale", "read_front", "write_front",
]
