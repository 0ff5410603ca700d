"""Self-contained dense tableau simplex, used as an independent LP oracle.

Deliberately naive: two-phase, Bland's rule, dense numpy tableau.  Slow but
simple enough to trust, which is the point of an oracle.
"""

from __future__ import annotations

import math

import numpy as np


def dense_lp_oracle(
    c,
    a_ub=None,
    b_ub=None,
    a_eq=None,
    b_eq=None,
    lower=None,
    upper=None,
) -> float:
    """Minimize ``c.x`` subject to ``a_ub x <= b_ub``, ``a_eq x = b_eq`` and bounds.

    Returns the optimal objective.  Raises if infeasible or unbounded.
    Free variables are split, finite lower bounds shifted to zero, finite
    upper bounds appended as inequality rows.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float).ravel()
    upper = np.full(n, math.inf) if upper is None else np.asarray(upper, dtype=float).ravel()

    # Shift finite lower bounds to zero; split free variables into x+ - x-.
    shift = np.where(np.isfinite(lower), lower, 0.0)
    b_ub = b_ub - a_ub @ shift
    b_eq = b_eq - a_eq @ shift
    upper_sh = upper - shift
    offset = float(c @ shift)
    free = ~np.isfinite(lower)
    cols_c = [c]
    cols_ub = [a_ub]
    cols_eq = [a_eq]
    if free.any():
        cols_c.append(-c[free])
        cols_ub.append(-a_ub[:, free])
        cols_eq.append(-a_eq[:, free])
    c2 = np.concatenate(cols_c)
    a_ub2 = np.hstack(cols_ub)
    a_eq2 = np.hstack(cols_eq)
    n2 = len(c2)

    finite_up = np.flatnonzero(np.isfinite(upper_sh))
    if len(finite_up):
        rows = np.zeros((len(finite_up), n2))
        rows[np.arange(len(finite_up)), finite_up] = 1.0
        a_ub2 = np.vstack([a_ub2, rows])
        b_ub = np.concatenate([b_ub, upper_sh[finite_up]])

    # Standard form: slacks on <= rows, artificials where needed.
    m_ub, m_eq = len(b_ub), len(b_eq)
    a = np.vstack([a_ub2, a_eq2]) if m_eq else a_ub2
    b = np.concatenate([b_ub, b_eq])
    m = m_ub + m_eq
    a = np.hstack([a, np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))])]) if m_ub else a
    neg = b < 0
    a[neg] *= -1.0
    b = np.abs(b)
    # Slack columns flipped on negated <= rows no longer form a basis there,
    # so give every row an artificial; phase 1 drives them out.
    a = np.hstack([a, np.eye(m)])
    total = a.shape[1]
    basis = list(range(total - m, total))

    def run(tableau, cost, basis):
        while True:
            duals = cost[basis] @ tableau[:, :-1]
            reduced = cost[: total] - duals
            enter = -1
            for j in range(total):
                if reduced[j] < -1e-9:
                    enter = j
                    break
            if enter < 0:
                return
            col = tableau[:, enter]
            best_ratio, leave = math.inf, -1
            for i in range(m):
                if col[i] > 1e-11:
                    ratio = tableau[i, -1] / col[i]
                    if ratio < best_ratio - 1e-12 or (
                        abs(ratio - best_ratio) <= 1e-12 and (leave < 0 or basis[i] < basis[leave])
                    ):
                        best_ratio, leave = ratio, i
            if leave < 0:
                raise ValueError("unbounded")
            pivot = tableau[leave, enter]
            tableau[leave] /= pivot
            for i in range(m):
                if i != leave and abs(tableau[i, enter]) > 0:
                    tableau[i] -= tableau[i, enter] * tableau[leave]
            basis[leave] = enter

    tableau = np.hstack([a, b.reshape(-1, 1)])
    phase1 = np.zeros(total)
    phase1[total - m :] = 1.0
    run(tableau, phase1, basis)
    if float(phase1[basis] @ tableau[:, -1]) > 1e-7:
        raise ValueError("infeasible")
    phase2 = np.zeros(total)
    phase2[:n2] = c2
    # Forbid artificials from re-entering.
    tableau[:, total - m : total] = 0.0
    for i, var in enumerate(basis):
        if var >= total - m:
            tableau[:, var] = 0.0
            tableau[i, var] = 1.0
    run(tableau, phase2, basis)
    x = np.zeros(total)
    x[basis] = tableau[:, -1]
    return float(phase2 @ x) + offset
