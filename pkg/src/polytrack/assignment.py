"""Rectangular maximum-weight assignment.

Rows are candidate slots (existing global topics followed by potential new
ones), columns are the topic estimates that must each be placed.  Every
column gets exactly one row and every row takes at most one column.
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import Infeasible, TooLarge

BRUTE_FORCE_MAX_COLUMNS = 8
# costs closer than this count as tied
TIE_ATOL = 1e-12


@dataclass(frozen=True)
class AssignmentSolution:
    col_to_row: np.ndarray
    objective: float

    def row_to_col(self, n_rows):
        """Inverse map with ``-1`` for unassigned rows."""
        out = np.full(n_rows, -1, dtype=int)
        out[self.col_to_row] = np.arange(self.col_to_row.size)
        return out


def _validate(cost):
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    n_rows, n_cols = cost.shape
    if n_rows < n_cols:
        raise ValueError(f"cost matrix needs rows >= columns, got {n_rows}x{n_cols}")
    if np.isnan(cost).any() or np.isposinf(cost).any():
        raise ValueError("cost matrix entries must be finite or -inf")
    if n_cols and not np.isfinite(cost).any(axis=0).all():
        bad = int(np.flatnonzero(~np.isfinite(cost).any(axis=0))[0])
        raise Infeasible(f"column {bad} has no allowed row")
    return cost


def forbidden_sentinel(cost):
    """Finite stand-in for ``-inf``: lower than any all-finite objective can reach."""
    finite = cost[np.isfinite(cost)]
    lo, hi = finite.min(), finite.max()
    return lo - (cost.shape[1] * (hi - lo) + 1.0)


def solve_max_assignment(cost):
    """Globally optimal assignment of every column to a distinct row.

    Parameters
    ----------
    cost : array-like of shape (n_rows, n_cols)
        ``n_rows >= n_cols``.  Entries equal to ``-inf`` forbid a pairing.

    Returns
    -------
    AssignmentSolution

    Raises
    ------
    Infeasible
        If a column has no finite entry, or the forbidden pairings admit no
        complete assignment.
    """
    cost = _validate(cost)
    n_rows, n_cols = cost.shape
    if n_cols == 0:
        return AssignmentSolution(np.zeros(0, dtype=int), 0.0)
    forbidden = ~np.isfinite(cost)
    work = np.where(forbidden, forbidden_sentinel(cost), cost) if forbidden.any() else cost
    cols, rows = linear_sum_assignment(work.T, maximize=True)
    col_to_row = np.empty(n_cols, dtype=int)
    col_to_row[cols] = rows
    col_to_row = _prefer_low_rows(work, col_to_row)
    if forbidden[col_to_row, np.arange(n_cols)].any():
        raise Infeasible("forbidden pairings leave no complete assignment")
    objective = float(cost[col_to_row, np.arange(n_cols)].sum())
    return AssignmentSolution(col_to_row, objective)


def _prefer_low_rows(cost, col_to_row, tol=TIE_ATOL):
    """Resolve ties toward lower rows with objective-neutral moves.

    Two kinds of moves are applied until none is left: a column moves to a
    free lower row of equal cost, and two columns exchange rows when that
    puts the lower row on the earlier column at equal total.  This settles
    the ties that actually occur (duplicate rows or columns) without
    another solve.
    """
    n_rows, n_cols = cost.shape
    ks = np.arange(n_cols)
    changed = True
    while changed:
        changed = False
        used = np.zeros(n_rows, dtype=bool)
        used[col_to_row] = True
        for k in range(n_cols):
            r = col_to_row[k]
            free = np.flatnonzero(~used[:r] & (cost[:r, k] >= cost[r, k] - tol))
            if free.size:
                used[r], used[free[0]] = False, True
                col_to_row[k] = free[0]
                changed = True
        current = cost[col_to_row, ks]
        swapped = cost[col_to_row[None, :], ks[:, None]]  # [k, l]: column k on l's row
        gain = swapped + swapped.T - current[:, None] - current[None, :]
        later_lower = col_to_row[None, :] < col_to_row[:, None]
        cand = np.triu(later_lower & (gain >= -tol), 1)
        if cand.any():
            k, l = np.argwhere(cand)[0]
            col_to_row[k], col_to_row[l] = col_to_row[l], col_to_row[k]
            changed = True
    return col_to_row


def brute_force_assignment(cost):
    """Exhaustive maximum over all injective column -> row maps (test oracle).

    Enumerates ``n_rows! / (n_rows - n_cols)!`` candidates; among equal
    objectives the lexicographically smallest ``col_to_row`` wins.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim == 2 and cost.shape[1] > BRUTE_FORCE_MAX_COLUMNS:
        raise TooLarge(f"brute force limited to {BRUTE_FORCE_MAX_COLUMNS} columns")
    cost = _validate(cost)
    n_rows, n_cols = cost.shape
    best_rows, best_val = None, -np.inf
    cols = np.arange(n_cols)
    for rows in permutations(range(n_rows), n_cols):
        val = cost[list(rows), cols].sum()
        if val > best_val:
            best_rows, best_val = rows, val
    if best_rows is None or not np.isfinite(best_val):
        raise Infeasible("forbidden pairings leave no complete assignment")
    return AssignmentSolution(np.array(best_rows, dtype=int), float(best_val))
