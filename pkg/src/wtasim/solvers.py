"""Assignment solvers over pairwise cost matrices.

Four routes to the same contract: an O(n^3) Hungarian solver, a native
depth-first branch-and-bound handling side constraints (coverage, per-target
capacity, forbidden pairs), a forward auction with epsilon scaling, and an
exhaustive oracle for small instances. All exact solvers share one
tie-breaking rule: among equal-objective optima, return the
lexicographically smallest target vector, so logs are reproducible.

Matrix convention: rows are interceptors, columns are targets, both in the
caller's index space. Returned assignments use 1-based target indices.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Assignment",
    "MilpConstraints",
    "InfeasibleError",
    "PadMap",
    "pad_rectangular",
    "solve_hungarian",
    "solve_milp",
    "solve_auction",
    "brute_force_assignment",
]

# Objective differences at or below this are treated as exact ties.
TIE_TOL = 1e-9

# Oracle enumeration refuses instances past this size.
BRUTE_FORCE_LIMIT = 8


class InfeasibleError(ValueError):
    """No assignment satisfies the requested constraints."""


@dataclass(eq=False)
class Assignment:
    """Solver output: 1-based target index per interceptor row.

    target_of[i] = k means interceptor row i engages target column k.
    """

    target_of: np.ndarray
    objective: float

    def __post_init__(self) -> None:
        self.target_of = np.asarray(self.target_of, dtype=int)

    def as_list(self) -> list[int]:
        return [int(k) for k in self.target_of]


@dataclass
class MilpConstraints:
    """Side constraints of the binary assignment program.

    Attributes:
        coverage_required: every target must receive at least one
            interceptor (requires at least as many rows as columns).
        max_per_target: optional per-target capacity, 1-based column ->
            maximum interceptors; absent columns are uncapped.
        forbidden_pairs: optional set of disallowed (row, column) pairs,
            both 1-based.
    """

    coverage_required: bool = True
    max_per_target: dict[int, int] | None = None
    forbidden_pairs: set[tuple[int, int]] | None = None


def _as_values(cost) -> np.ndarray:
    values = getattr(cost, "values", cost)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
        raise ValueError(f"cost matrix must be 2-D and nonempty, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("cost matrix entries must be finite")
    return values


def _objective(values: np.ndarray, cols0: np.ndarray) -> float:
    return float(values[np.arange(values.shape[0]), cols0].sum())


# ---------------------------------------------------------------------------
# Hungarian core (shortest augmenting path with dual potentials)
# ---------------------------------------------------------------------------

def _lap_square(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-cost perfect matching on a square matrix.

    Returns (col_of_row, u, v): the optimal column per row (0-based) and
    dual potentials satisfying values[i, j] - u[i] - v[j] >= 0 for all
    pairs (up to rounding) with equality on matched pairs.
    """
    n = values.shape[0]
    # 1-based working arrays; index 0 is the virtual root column.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    matched_row = np.zeros(n + 1, dtype=np.int64)  # per column; 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        matched_row[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = matched_row[j0]
            reduced = values[i0 - 1, :] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (reduced < minv[1:])
            if better.any():
                idx = np.flatnonzero(better) + 1
                minv[idx] = reduced[idx - 1]
                way[idx] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            used_cols = np.flatnonzero(used)
            u[matched_row[used_cols]] += delta
            v[used_cols] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if matched_row[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            matched_row[j0] = matched_row[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[matched_row[j] - 1] = j - 1
    return col_of_row, u[1:].copy(), v[1:].copy()


def _perfect_matching(adjacency: np.ndarray, match_col: np.ndarray | None = None) -> np.ndarray | None:
    """Perfect matching of all rows into distinct columns, or None.

    adjacency[r, c] marks an allowed edge. Kuhn's augmenting-path search;
    deterministic because candidate columns are scanned in ascending order.
    """
    n_rows, n_cols = adjacency.shape
    row_of_col = np.full(n_cols, -1, dtype=np.int64)
    if match_col is not None:
        for r, c in enumerate(match_col):
            if c >= 0:
                row_of_col[c] = r

    def augment(r: int, visited: np.ndarray) -> bool:
        for c in np.flatnonzero(adjacency[r]):
            if visited[c]:
                continue
            visited[c] = True
            if row_of_col[c] < 0 or augment(int(row_of_col[c]), visited):
                row_of_col[c] = r
                return True
        return False

    for r in range(n_rows):
        if match_col is not None and match_col[r] >= 0:
            continue
        if not augment(r, np.zeros(n_cols, dtype=bool)):
            return None
    col_of_row = np.full(n_rows, -1, dtype=np.int64)
    for c in range(n_cols):
        if row_of_col[c] >= 0:
            col_of_row[row_of_col[c]] = c
    if (col_of_row < 0).any():
        return None
    return col_of_row


def _lex_smallest_matching(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Lexicographically smallest optimal matching of a solved square LAP.

    By complementary slackness every optimal matching lives inside the
    zero-reduced-cost subgraph of any optimal dual pair, and conversely any
    perfect matching of that subgraph is optimal. Rows greedily take the
    smallest admissible column that still leaves the remaining rows
    matchable.
    """
    n = values.shape[0]
    tol = TIE_TOL * (1.0 + float(np.abs(values).max()))
    admissible = (values - u[:, None] - v[None, :]) <= tol
    # Unique column per row everywhere means the optimum is unique already.
    if (admissible.sum(axis=1) == 1).all():
        return np.argmax(admissible, axis=1).astype(np.int64)

    chosen = np.full(n, -1, dtype=np.int64)
    col_taken = np.zeros(n, dtype=bool)
    for r in range(n):
        for c in np.flatnonzero(admissible[r] & ~col_taken):
            chosen[r] = c
            col_taken[c] = True
            rest = admissible[r + 1 :][:, ~col_taken]
            if rest.shape[0] == 0 or _perfect_matching(rest) is not None:
                break
            chosen[r] = -1
            col_taken[c] = False
        if chosen[r] < 0:  # pragma: no cover - duals guarantee a matching
            raise RuntimeError("admissible subgraph lost its perfect matching")
    return chosen


def _solve_square(values: np.ndarray) -> np.ndarray:
    _, u, v = _lap_square(values)
    # The refinement re-picks among equal-cost optima only.
    return _lex_smallest_matching(values, u, v)


# ---------------------------------------------------------------------------
# Rectangular padding
# ---------------------------------------------------------------------------

@dataclass
class PadMap:
    """Bookkeeping to strip a padded square solution back to the original.

    For duplicate_targets mode, padded columns map to original columns
    (wildcard columns, marked -1, resolve to the assigned row's cheapest
    original column). For dummy_columns mode, appended zero-cost rows absorb
    the surplus targets and are dropped on strip.
    """

    mode: str
    n_rows: int
    n_cols: int
    col_to_original: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def strip(self, padded_cols: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Map a padded solution back to 0-based original columns.

        Args:
            padded_cols: 0-based column per padded row.
            values: the original (unpadded) cost matrix, used to resolve
                wildcard columns.
        """
        out = np.empty(self.n_rows, dtype=np.int64)
        for r in range(self.n_rows):
            c = int(padded_cols[r])
            if c < self.n_cols:
                out[r] = c
            else:
                mapped = int(self.col_to_original[c - self.n_cols])
                out[r] = mapped if mapped >= 0 else int(np.argmin(values[r]))
        return out


def pad_rectangular(
    cost,
    mode: str,
    max_per_target: dict[int, int] | None = None,
) -> tuple[np.ndarray, PadMap]:
    """Square a rectangular cost matrix for the matching solvers.

    Modes:
        duplicate_targets: more interceptors than targets; surplus rows
            double up on real targets. Without capacities the surplus is
            absorbed by wildcard columns holding each row's cheapest real
            cost, which is exact for the coverage-constrained problem. With
            capacities, columns are duplicated explicitly (capped at the
            capacity) and zero-cost filler rows absorb unused duplicates.
        dummy_columns: fewer interceptors than targets; zero-cost rows are
            appended so the matrix squares up, and the surplus targets end
            up unengaged.

    Returns the padded square matrix and the PadMap that strips solutions.
    """
    values = _as_values(cost)
    n, nt = values.shape
    if n == nt:
        raise ValueError("no padding needed: cost matrix is already square")

    if mode == "duplicate_targets":
        if n < nt:
            raise ValueError("duplicate_targets requires more interceptors than targets")
        surplus = n - nt
        if max_per_target is None:
            wild = values.min(axis=1, keepdims=True)
            padded = np.hstack([values, np.repeat(wild, surplus, axis=1)])
            col_map = np.full(surplus, -1, dtype=np.int64)
            return padded, PadMap("duplicate_targets", n, nt, col_map)
        # Capacitated: duplicate column k up to min(cap_k, 1 + surplus) - 1
        # times (no optimal solution loads one target beyond 1 + surplus).
        caps = np.array(
            [max(0, int(max_per_target.get(k + 1, n))) for k in range(nt)], dtype=np.int64
        )
        if (caps < 1).any():
            bad = [k + 1 for k in np.flatnonzero(caps < 1)]
            raise InfeasibleError(f"coverage impossible: targets {bad} have zero capacity")
        usable = np.minimum(caps, 1 + surplus)
        if int(usable.sum()) < n:
            raise InfeasibleError(
                f"capacities admit {int(usable.sum())} engagements for {n} interceptors"
            )
        dup_counts = usable - 1
        col_map = np.repeat(np.arange(nt, dtype=np.int64), dup_counts)
        padded_cols = np.hstack([values, values[:, col_map]])
        total_cols = padded_cols.shape[1]
        filler = total_cols - n
        if filler > 0:
            big = (total_cols + 1) * (1.0 + float(np.abs(values).max()))
            filler_rows = np.zeros((filler, total_cols))
            filler_rows[:, :nt] = big  # keep real targets for real rows
            padded_cols = np.vstack([padded_cols, filler_rows])
        return padded_cols, PadMap("duplicate_targets", n, nt, col_map)

    if mode == "dummy_columns":
        if n > nt:
            raise ValueError("dummy_columns requires fewer interceptors than targets")
        dummy = np.zeros((nt - n, nt))
        padded = np.vstack([values, dummy])
        return padded, PadMap("dummy_columns", n, nt)

    raise ValueError(f"unknown pad mode {mode!r}")


# ---------------------------------------------------------------------------
# Public solvers
# ---------------------------------------------------------------------------

def solve_hungarian(cost) -> Assignment:
    """Minimum-cost matching; pads rectangular inputs and strips the result.

    Square matrices get a global minimum-cost perfect matching. With more
    interceptors than targets, every target is covered and surplus rows
    double up on their cheapest target; with fewer, the cheapest injective
    partial engagement is returned. Ties break toward the lexicographically
    smallest target vector.
    """
    values = _as_values(cost)
    n, nt = values.shape
    if n == nt:
        cols = _solve_square(values)
    elif n > nt:
        padded, pad_map = pad_rectangular(values, "duplicate_targets")
        cols = pad_map.strip(_solve_square(padded), values)
    else:
        padded, pad_map = pad_rectangular(values, "dummy_columns")
        cols = _solve_square(padded)[:n]
    return Assignment(target_of=cols + 1, objective=_objective(values, cols))


def _capacity_array(cons: MilpConstraints, n: int, nt: int) -> np.ndarray:
    caps = np.full(nt, n, dtype=np.int64)
    if cons.max_per_target:
        for k, cap in cons.max_per_target.items():
            if not 1 <= k <= nt:
                raise ValueError(f"max_per_target column {k} out of range 1..{nt}")
            caps[k - 1] = min(n, max(0, int(cap)))
    return caps


def _forbidden_mask(cons: MilpConstraints, n: int, nt: int) -> np.ndarray:
    mask = np.zeros((n, nt), dtype=bool)
    if cons.forbidden_pairs:
        for i, k in cons.forbidden_pairs:
            if not (1 <= i <= n and 1 <= k <= nt):
                raise ValueError(f"forbidden pair ({i}, {k}) out of range")
            mask[i - 1, k - 1] = True
    return mask


def solve_milp(cost, constraints: MilpConstraints | None = None) -> Assignment:
    """Exact binary assignment with side constraints via branch-and-bound.

    Depth-first search fixes interceptors in row order, branching over
    targets in ascending order so the first incumbent at the optimal value
    is the lexicographically smallest one. Node bounds come from the
    Hungarian relaxation that ignores capacity limits (admissible because
    dropping constraints can only lower the optimum); on nodes where the
    relaxation is the exact remaining problem its refined solution is
    accepted outright.

    Raises InfeasibleError naming the binding constraint family when no
    assignment satisfies the constraint set.
    """
    values = _as_values(cost)
    cons = constraints if constraints is not None else MilpConstraints()
    n, nt = values.shape

    if cons.coverage_required and n < nt:
        raise InfeasibleError(
            f"coverage requires at least as many interceptors as targets (N={n} < N_T={nt})"
        )
    caps = _capacity_array(cons, n, nt)
    forbidden = _forbidden_mask(cons, n, nt)
    if cons.coverage_required and (caps < 1).any():
        bad = [int(k) + 1 for k in np.flatnonzero(caps < 1)]
        raise InfeasibleError(f"coverage impossible: targets {bad} have zero capacity")
    if int(caps.sum()) < n:
        raise InfeasibleError(
            f"capacities admit {int(caps.sum())} engagements for {n} interceptors"
        )
    if forbidden.all(axis=1).any():
        bad = [int(i) + 1 for i in np.flatnonzero(forbidden.all(axis=1))]
        raise InfeasibleError(f"interceptors {bad} have every target forbidden")

    big = (max(n, nt) + 1) * (1.0 + float(np.abs(values).max()))
    work = np.where(forbidden, big, values)
    tol = TIE_TOL

    best_obj = np.inf
    best_cols: np.ndarray | None = None
    chosen = np.full(n, -1, dtype=np.int64)
    usage = np.zeros(nt, dtype=np.int64)

    def completion_bound(depth: int) -> tuple[float, np.ndarray | None, bool]:
        """Lower bound on completing rows depth..n-1; (bound, cols, exact).

        cols is the relaxation's per-row choice when available; exact marks
        bounds whose relaxation already satisfies every side constraint.
        """
        free = n - depth
        if free == 0:
            return 0.0, np.empty(0, dtype=np.int64), True
        sub = work[depth:, :]
        if cons.coverage_required:
            uncovered = np.flatnonzero(usage == 0)
            if free == uncovered.size:
                # Remaining rows must exactly cover the uncovered targets:
                # the relaxation is the true subproblem (capacities cannot
                # bind on an injective completion of unit-usage targets).
                sub_sq = sub[:, uncovered]
                cols_local = _solve_square(sub_sq)
                cols_abs = uncovered[cols_local]
                bound = _objective(sub, cols_abs)
                exact = not forbidden[depth:, :][np.arange(free), cols_abs].any()
                return bound, cols_abs, exact
            # Surplus rows double up: wildcard-padded matching ignoring
            # capacity limits; admissible, not exact under capacities.
            rows_for_cover = uncovered.size
            if rows_for_cover == 0:
                bound = float(sub.min(axis=1).sum())
                return bound, None, False
            sub_cover = sub[:, uncovered]
            wild = sub.min(axis=1, keepdims=True)
            padded = np.hstack([sub_cover, np.repeat(wild, free - rows_for_cover, axis=1)])
            cols_pad = _solve_square(padded)
            bound = float(
                sum(
                    sub[r, uncovered[c]] if c < rows_for_cover else wild[r, 0]
                    for r, c in enumerate(cols_pad)
                )
            )
            return bound, None, False
        # No coverage: rows are independent except for capacities.
        bound = float(sub.min(axis=1).sum())
        return bound, None, (cons.max_per_target is None and not forbidden[depth:].any())

    def record(cols: np.ndarray, obj: float) -> None:
        nonlocal best_obj, best_cols
        if obj < best_obj - tol:
            best_obj = obj
            best_cols = cols.copy()

    def dfs(depth: int, fixed_cost: float) -> None:
        nonlocal best_obj
        bound, relax_cols, exact = completion_bound(depth)
        if fixed_cost + bound >= best_obj - tol:
            return
        if exact:
            full = chosen.copy()
            if depth < n:
                if relax_cols is None:
                    relax_cols = np.argmin(work[depth:, :], axis=1)
                full[depth:] = relax_cols
            record(full, fixed_cost + bound)
            return
        if depth == n:
            record(chosen, fixed_cost)
            return
        remaining_after = n - depth - 1
        for k in range(nt):
            if forbidden[depth, k] or usage[k] >= caps[k]:
                continue
            uncovered_after = int((usage == 0).sum()) - (1 if usage[k] == 0 else 0)
            if cons.coverage_required and uncovered_after > remaining_after:
                continue
            chosen[depth] = k
            usage[k] += 1
            dfs(depth + 1, fixed_cost + work[depth, k])
            usage[k] -= 1
            chosen[depth] = -1

    dfs(0, 0.0)

    # The search never branches onto a forbidden edge and exact-node
    # acceptance checks for them, so any incumbent is genuinely feasible.
    if best_cols is None or forbidden[np.arange(n), best_cols].any():
        families = ["coverage" if cons.coverage_required else None,
                    "max_per_target" if cons.max_per_target else None,
                    "forbidden_pairs" if cons.forbidden_pairs else None]
        active = [f for f in families if f]
        raise InfeasibleError(
            "no feasible assignment under constraints: " + (", ".join(active) or "none")
        )
    return Assignment(target_of=best_cols + 1, objective=_objective(values, best_cols))


def solve_auction(cost, eps_final: float = 1e-6) -> Assignment:
    """Forward auction with epsilon scaling on a square cost matrix.

    Costs are negated internally so the iteration runs in its natural
    max-profit form; the exposed semantics stay min-cost. Prices persist
    across scaling rounds (eps_0 = max|c| / 2, then eps /= 4 until it drops
    to eps_final), and the final objective is within n * eps_final of the
    optimum -- exactly optimal for integer costs when eps_final < 1/n.
    """
    values = _as_values(cost)
    n, nt = values.shape
    if n != nt:
        raise ValueError(f"auction requires a square matrix (apply padding first), got {n}x{nt}")
    if not eps_final > 0.0:
        raise ValueError(f"eps_final must be positive, got {eps_final}")

    profit = -values
    prices = np.zeros(n)
    scale = max(float(np.abs(values).max()) / 2.0, eps_final)
    schedule = [scale]
    while schedule[-1] > eps_final:
        schedule.append(max(schedule[-1] / 4.0, eps_final))

    owner = np.full(n, -1, dtype=np.int64)  # object -> person
    col_of = np.full(n, -1, dtype=np.int64)  # person -> object
    max_rounds = 20_000 + 2_000 * n * n

    for eps in schedule:
        owner.fill(-1)
        col_of.fill(-1)
        queue = deque(range(n))
        rounds = 0
        while queue:
            rounds += 1
            if rounds > max_rounds:
                raise RuntimeError(
                    f"auction failed to converge within {max_rounds} bids at eps={eps:g}"
                )
            person = queue.popleft()
            net = profit[person] - prices
            best = int(np.argmax(net))
            best_value = net[best]
            if n > 1:
                net[best] = -np.inf
                second_value = float(net.max())
            else:
                second_value = best_value
            prices[best] += best_value - second_value + eps
            previous = int(owner[best])
            if previous >= 0:
                col_of[previous] = -1
                queue.append(previous)
            owner[best] = person
            col_of[person] = best

    return Assignment(target_of=col_of + 1, objective=_objective(values, col_of))


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------

def _enumerate_assignments(n: int, nt: int, coverage: bool):
    """Yield candidate 0-based column tuples in lexicographic order."""
    if coverage and n == nt:
        yield from itertools.permutations(range(nt))
    else:
        yield from itertools.product(range(nt), repeat=n)


def brute_force_assignment(cost, constraints: MilpConstraints | None = None) -> Assignment:
    """Exhaustive oracle: enumerate every feasible assignment.

    Deliberately naive so it can stand as an independent check on the real
    solvers. Enumeration is lexicographic and the first objective within
    TIE_TOL of the minimum wins, which reproduces the shared tie-break rule.
    Refuses instances with more than BRUTE_FORCE_LIMIT rows or columns.
    """
    values = _as_values(cost)
    cons = constraints if constraints is not None else MilpConstraints()
    n, nt = values.shape
    if n > BRUTE_FORCE_LIMIT or nt > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"brute force limited to {BRUTE_FORCE_LIMIT} rows/columns, got {n}x{nt}"
        )
    if cons.coverage_required and n < nt:
        raise InfeasibleError(
            f"coverage requires at least as many interceptors as targets (N={n} < N_T={nt})"
        )
    caps = _capacity_array(cons, n, nt)
    forbidden = _forbidden_mask(cons, n, nt)

    best_obj = np.inf
    best: np.ndarray | None = None
    chunk_size = 1 << 15
    iterator = _enumerate_assignments(n, nt, cons.coverage_required)
    while True:
        chunk = np.array(list(itertools.islice(iterator, chunk_size)), dtype=np.int64)
        if chunk.size == 0:
            break
        ok = np.ones(chunk.shape[0], dtype=bool)
        if cons.forbidden_pairs:
            ok &= ~forbidden[np.arange(n)[None, :], chunk].any(axis=1)
        counts = np.zeros((chunk.shape[0], nt), dtype=np.int64)
        for r in range(n):
            np.add.at(counts, (np.arange(chunk.shape[0]), chunk[:, r]), 1)
        if cons.coverage_required:
            ok &= (counts >= 1).all(axis=1)
        ok &= (counts <= caps[None, :]).all(axis=1)
        if not ok.any():
            continue
        objs = values[np.arange(n)[None, :], chunk].sum(axis=1)
        objs[~ok] = np.inf
        # First candidate within tolerance of the chunk minimum: lex order.
        idx = int(np.flatnonzero(objs <= objs.min() + TIE_TOL)[0])
        if objs[idx] < best_obj - TIE_TOL:
            best_obj = float(objs[idx])
            best = chunk[idx].copy()
    if best is None:
        raise InfeasibleError("no feasible assignment under the given constraints")
    return Assignment(target_of=best + 1, objective=_objective(values, best))
