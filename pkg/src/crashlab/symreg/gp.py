"""Tree-based genetic programming with parsimony pressure.

Every individual is a core expression ``f``; before scoring it is wrapped
in the least-squares linear scaling ``alpha + beta*f`` fitted on the
training rows, and the wrapped expression is what gets scored, counted and
exported.  Fitness is holdout MAE plus ``parsimony * std(y_train)`` per
node.  The generation cap alone decides the result; the wall-clock budget
only aborts runs that would overrun it.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from ..errors import EmptyFront, InvalidArgument, InvalidExpression
from ..mlcore.validation import split_indices
from .expr import (
    BINARY,
    VARIABLES,
    Expr,
    binary,
    columns,
    compile_expr,
    const,
    constants,
    eval_expr,
    fold_constants,
    neg,
    nodes,
    parse_infix,
    replace_at,
    square,
    to_infix,
    var,
    with_constants,
)

FRONT_COLUMNS = ("complexity", "mae", "r2", "expression")
STEP_SCHEDULE = (1.0, 0.5, 0.2, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 1e-6, 1e-7)
COARSE_SCHEDULE = (1.0, 0.3, 0.1, 0.03, 0.01)
MAX_MOVES = 32  # consecutive accepted moves per constant, step and direction


@dataclass(frozen=True)
class SymregConfig:
    population: int = 300
    generations: int = 60
    tournament: int = 5
    crossover_rate: float = 0.7
    mutation_rate: float = 0.25
    max_complexity: int = 25
    parsimony: float = 1e-3
    seed: int = 0
    time_budget: float = 60.0
    holdout_fraction: float = 0.2
    init_depth: int = 4
    const_range: float = 10.0
    refine_top: int = 2
    refine_sweeps: int = 2
    refine_small: int = 11
    polish_sweeps: int = 10
    archive_per_size: int = 4

    def __post_init__(self):
        if self.population < 2:
            raise InvalidArgument("population must be at least 2")
        if not 1 <= self.tournament <= self.population:
            raise InvalidArgument("tournament size must lie in [1, population]")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidArgument(f"{name} must lie in [0, 1]")
        if self.crossover_rate + self.mutation_rate > 1.0:
            raise InvalidArgument("crossover_rate + mutation_rate must not exceed 1")
        if self.max_complexity < 1 or self.parsimony < 0 or self.generations < 0 or self.time_budget < 0:
            raise InvalidArgument("invalid symbolic regression budget")


@dataclass(frozen=True)
class FrontMember:
    expression: Expr
    complexity: int
    mae: float
    r2: float

    @property
    def infix(self) -> str:
        return to_infix(self.expression)


@dataclass
class ParetoFront:
    members: list[FrontMember]
    history: list[float] = field(default_factory=list)  # best holdout MAE per generation
    n_train: int = 0
    n_test: int = 0

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def best(self) -> FrontMember:
        return min(self.members, key=lambda m: (m.mae, m.complexity))


def _mae(pred, y):
    if not np.all(np.isfinite(pred)):
        return math.inf
    return float(np.mean(np.abs(pred - y)))


def _r2(pred, y):
    ss = float(np.sum((y - y.mean()) ** 2))
    if ss == 0.0 or not np.all(np.isfinite(pred)):
        return math.nan
    return 1.0 - float(np.sum((pred - y) ** 2)) / ss


def fit_constants(e: Expr, X, y, max_sweeps: int = 50, steps=STEP_SCHEDULE,
                  rescale: bool = False) -> Expr:
    """Pattern search on the constants of ``e`` minimising MAE on (X, y).

    Each sweep visits constants in preorder and, for every step in a fixed
    decreasing schedule, keeps scaling the constant by ``1 +/- step`` (or
    shifting a zero by ``+/- step``) while the error strictly drops, at most
    ``MAX_MOVES`` times in a row.  The
    result is never worse than the input.  With ``rescale`` the error is
    measured after refitting the least-squares ``alpha + beta*e`` wrapper.
    """
    vals = constants(e)
    if not vals or max_sweeps <= 0:
        return e
    cols = columns(X)
    y = np.asarray(y, dtype=float)
    f = compile_expr(e)

    def loss(v):
        pred = np.broadcast_to(f(cols, v), y.shape)
        if rescale:
            pred = _scaled_prediction(pred, y)
        return _mae(pred, y)

    vals = list(vals)
    best = loss(vals)
    for _ in range(int(max_sweeps)):
        improved = False
        for i in range(len(vals)):
            for step in steps:
                for sign in (1.0, -1.0):
                    for _ in range(MAX_MOVES):
                        trial = list(vals)
                        v = vals[i]
                        trial[i] = v * (1.0 + sign * step) if v != 0.0 else sign * step
                        if not math.isfinite(trial[i]) or trial[i] == v:
                            break
                        cur = loss(trial)
                        if cur < best:
                            vals, best, improved = trial, cur, True
                        else:
                            break
        if not improved:
            break
    return with_constants(e, vals)


def _coefficients(f, y):
    """Least-squares (alpha, beta) for ``y ~ alpha + beta*f``; beta None if f is flat."""
    fm, ym = f.mean(), y.mean()
    with np.errstate(over="ignore", invalid="ignore"):
        var_f = float(np.mean((f - fm) ** 2))
        if not np.isfinite(var_f) or var_f <= 1e-300 * max(1.0, fm * fm):
            return float(ym), None
        beta = float(np.mean((f - fm) * (y - ym)) / var_f)
    return float(ym - beta * fm), beta


def _scaled_prediction(f, y):
    if not np.all(np.isfinite(f)):
        return f
    alpha, beta = _coefficients(f, y)
    return alpha + (0.0 if beta is None else beta) * f


def linear_scale(core: Expr, f: np.ndarray, y: np.ndarray) -> Expr:
    """Wrap ``core`` as ``alpha + beta*core`` with least-squares coefficients.

    Coefficients within 1e-12 of the identity are dropped, so an already
    scaled expression comes back unchanged.
    """
    alpha, beta = _coefficients(f, y)
    if beta is None or beta == 0.0:
        return const(alpha)
    scale = max(abs(float(y.mean())), float(np.std(y)), 1e-300)
    out = core
    if abs(beta - 1.0) > 1e-12:
        out = binary("*", const(beta), out)
    if abs(alpha) > 1e-12 * scale:
        out = binary("+", const(alpha), out)
    return out


class _Evolver:
    def __init__(self, X, y, cfg: SymregConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        n = len(y)
        train, test = split_indices(n, cfg.holdout_fraction, cfg.seed)
        cols = columns(X)
        self.train_cols = {k: v[train] for k, v in cols.items()}
        self.test_cols = {k: v[test] for k, v in cols.items()}
        self.y_train, self.y_test = y[train], y[test]
        self.penalty = cfg.parsimony * max(float(np.std(self.y_train)), 1e-12)
        self.cache: dict[str, tuple] = {}
        self.refined: set[str] = set()
        self.polished: set[str] = set()
        self.archive: dict[int, list[tuple[float, str, Expr]]] = {}
        self.n_train, self.n_test = len(train), len(test)

    # -- scoring ------------------------------------------------------------------

    def score(self, core: Expr):
        """(fitness, holdout mae, scaled expression), memoised on the core's infix."""
        key = to_infix(core)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        core = fold_constants(core)
        f = eval_expr(core, self.train_cols)
        if np.all(np.isfinite(f)):
            scaled = linear_scale(core, f, self.y_train)
            mae = _mae(eval_expr(scaled, self.test_cols), self.y_test)
        else:
            scaled, mae = core, math.inf
        c = scaled.complexity
        fitness = mae + self.penalty * c if c <= self.cfg.max_complexity else math.inf
        out = (fitness, mae, scaled)
        self.cache[key] = out
        if math.isfinite(mae) and c <= self.cfg.max_complexity:
            self._archive(c, mae, scaled)
        return out

    def _archive(self, c, mae, expr):
        """Keep the ``archive_per_size`` lowest-MAE distinct expressions per complexity."""
        bucket = self.archive.setdefault(c, [])
        text = to_infix(expr)
        if any(t == text for _, t, _ in bucket):
            return
        if len(bucket) >= self.cfg.archive_per_size and mae >= bucket[-1][0]:
            return
        bucket.append((mae, text, expr))
        bucket.sort(key=lambda item: item[0])  # stable: earlier entries win ties
        del bucket[self.cfg.archive_per_size:]

    # -- variation ----------------------------------------------------------------

    def random_terminal(self) -> Expr:
        if self.rng.random() < 0.7:
            return var(VARIABLES[self.rng.integers(len(VARIABLES))])
        return const(round(float(self.rng.uniform(-self.cfg.const_range, self.cfg.const_range)), 3))

    def random_tree(self, depth: int, full: bool) -> Expr:
        if depth <= 0 or (not full and self.rng.random() < 0.3):
            return self.random_terminal()
        r = self.rng.random()
        if r < 0.8:
            op = tuple(BINARY)[self.rng.integers(len(BINARY))]
            return binary(op, self.random_tree(depth - 1, full), self.random_tree(depth - 1, full))
        child = self.random_tree(depth - 1, full)
        return square(child) if r < 0.93 else neg(child)

    def pick_node(self, e: Expr) -> int:
        return int(self.rng.integers(e.complexity))

    def crossover(self, a: Expr, b: Expr) -> Expr:
        donor = nodes(b)[self.pick_node(b)]
        return replace_at(a, self.pick_node(a), donor)

    def mutate(self, e: Expr) -> Expr:
        i = self.pick_node(e)
        target = nodes(e)[i]
        r = self.rng.random()
        if r < 0.5:
            return replace_at(e, i, self.random_tree(int(self.rng.integers(0, 3)), full=False))
        if r < 0.8:
            if target.op in BINARY:
                op = tuple(BINARY)[self.rng.integers(len(BINARY))]
                return replace_at(e, i, binary(op, *target.args))
            if target.op == "const":
                return replace_at(e, i, const(target.value * float(self.rng.uniform(0.5, 1.5))))
            if target.op == "var":
                return replace_at(e, i, self.random_terminal())
            return replace_at(e, i, target.args[0])  # drop a unary operator
        # grow: wrap the node in a new operator
        if self.rng.random() < 0.5:
            op = tuple(BINARY)[self.rng.integers(len(BINARY))]
            return replace_at(e, i, binary(op, target, self.random_terminal()))
        return replace_at(e, i, square(target))

    def tournament(self, pop, fits) -> Expr:
        idx = self.rng.integers(len(pop), size=self.cfg.tournament)
        best = min(idx, key=lambda j: (fits[j], j))
        return pop[best]

    # -- main loop ----------------------------------------------------------------

    def initial_population(self) -> list[Expr]:
        """Building blocks first (terminals, squares, pairwise products with and
        without offsets, ratios and linear pairs), then ramped half-and-half
        random trees."""
        vs = [var(v) for v in VARIABLES]
        pop = list(vs) + [square(v) for v in vs]
        for i, u in enumerate(vs):
            for j, w in enumerate(vs):
                if i < j:
                    pop.append(binary("*", u, w))
                    pop.append(binary("*", binary("+", u, const(1.0)), binary("+", w, const(1.0))))
                if i != j:
                    pop.append(binary("/", u, w))
                    pop.append(binary("+", u, binary("*", const(1.0), w)))
        pop = pop[: self.cfg.population]
        depths = range(1, self.cfg.init_depth + 1)
        k = 0
        while len(pop) < self.cfg.population:
            d = depths[k % len(depths)]
            pop.append(self.random_tree(d, full=bool(k % 2)))
            k += 1
        return pop

    def refine(self, pop, scored):
        """Coarse constant tuning for small individuals and the fittest few of every size."""
        order = sorted(range(len(pop)), key=lambda j: (scored[j][0], j))
        taken: dict[int, int] = {}
        out = []
        for j in order:
            fitness, _, scaled = scored[j]
            core = fold_constants(pop[j])
            if not math.isfinite(fitness) or not constants(core):
                continue
            c = scaled.complexity
            if taken.get(c, 0) >= self.cfg.refine_top and c > self.cfg.refine_small:
                continue
            key = to_infix(core)
            if key in self.refined:
                continue
            self.refined.add(key)
            taken[c] = taken.get(c, 0) + 1
            out.append(fit_constants(core, self.train_cols, self.y_train,
                                     self.cfg.refine_sweeps, COARSE_SCHEDULE, rescale=True))
        return out

    def run(self) -> ParetoFront:
        cfg = self.cfg
        if cfg.generations == 0 or cfg.time_budget == 0:
            raise EmptyFront("symbolic regression needs a nonzero generation and time budget")
        start = time.monotonic()
        pop = self.initial_population()
        history = []
        for gen in range(cfg.generations):
            scored = [self.score(e) for e in pop]
            fits = [s[0] for s in scored]
            history.append(min(s[1] for s in scored))
            if gen == cfg.generations - 1 or time.monotonic() - start > cfg.time_budget:
                break
            best_fit = min(range(len(pop)), key=lambda j: (fits[j], j))
            best_mae = min(range(len(pop)), key=lambda j: (scored[j][1], j))
            nxt = [pop[best_fit], pop[best_mae]]
            for tuned in self.refine(pop, scored):
                self.score(tuned)
                nxt.append(tuned)
            while len(nxt) < cfg.population:
                r = self.rng.random()
                parent = self.tournament(pop, fits)
                if r < cfg.crossover_rate:
                    child = self.crossover(parent, self.tournament(pop, fits))
                elif r < cfg.crossover_rate + cfg.mutation_rate:
                    child = self.mutate(parent)
                else:
                    child = parent
                if child.complexity > cfg.max_complexity:
                    child = parent
                nxt.append(child)
            pop = nxt[: cfg.population]
        return self.front(history)

    def polish(self) -> list[Expr]:
        """Tune the constants of archived expressions not tuned before."""
        todo = [e for c in sorted(self.archive) for _, _, e in self.archive[c] if constants(e)]
        out = []
        for expr in todo:
            key = to_infix(expr)
            if key in self.polished:
                continue
            self.polished.add(key)
            tuned = fit_constants(expr, self.train_cols, self.y_train, self.cfg.polish_sweeps)
            self.score(tuned)
            out.append(tuned)
        return out

    def front(self, history) -> ParetoFront:
        self.polish()
        members, best = [], math.inf
        for c in sorted(self.archive):
            mae, _, expr = self.archive[c][0]
            if mae < best:
                best = mae
                pred = eval_expr(expr, self.test_cols)
                members.append(FrontMember(expr, c, mae, _r2(pred, self.y_test)))
        if not members:
            raise EmptyFront("no finite expression was found")
        return ParetoFront(members, history, self.n_train, self.n_test)


def evolve(X, y, cfg: SymregConfig = SymregConfig()) -> ParetoFront:
    """Search for expressions in a, b, c, d fitting ``y``.

    ``X`` holds the symbols as an (n, 4) matrix or a mapping of columns; an
    internal seeded 80/20 split supplies the holdout rows that fitness and
    the reported front are measured on.
    """
    y = np.asarray(y, dtype=float)
    try:
        cols = columns(X)
    except InvalidExpression as exc:
        raise InvalidArgument(str(exc)) from None
    if set(cols) != set(VARIABLES):
        raise InvalidArgument(f"X must supply columns {VARIABLES}")
    n = len(y)
    if n < 10:
        raise InvalidArgument(f"need at least 10 rows, got {n}")
    if any(v.shape != (n,) for v in cols.values()):
        raise InvalidArgument("X and y lengths differ")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("y must be finite")
    return _Evolver(cols, y, cfg).run()


# -- export -------------------------------------------------------------------------

def write_front(front: ParetoFront, sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(FRONT_COLUMNS)
    for m in front:
        w.writerow([m.complexity, repr(m.mae), repr(m.r2), m.infix])


def read_front(source: IO[str]) -> list[FrontMember]:
    reader = csv.reader(source)
    header = next(reader, None)
    if tuple(header or ()) != FRONT_COLUMNS:
        raise InvalidArgument(f"unexpected front header {header}")
    return [FrontMember(parse_infix(r[3]), int(r[0]), float(r[1]), float(r[2])) for r in reader if r]
