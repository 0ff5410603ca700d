"""Representation and solution of linear-plus-second-order-cone programs.

This module is the single place the rest of the package touches a numerical
optimizer.  Programs are built row by row through :class:`ProgramBuilder`,
frozen into a :class:`ConicProgram`, and solved by :func:`solve_conic`, which
dispatches pure linear programs to HiGHS (via :mod:`scipy.optimize`) and
programs with second-order cone blocks to Clarabel.

Dual convention, uniform across backends: the reported dual of a row is the
derivative of the optimal objective with respect to that row's right-hand side
*in the row's declared orientation*.  For ``min x  s.t. x >= 1`` the dual of
the inequality is ``+1``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = [
    "ConicProgram",
    "ProgramBuilder",
    "SolveReport",
    "solve_conic",
    "evaluate_solution",
    "dump_program",
]


@dataclass(frozen=True)
class ConicProgram:
    """Immutable ``min c.x + c0`` over linear rows, bounds and cone blocks.

    Inequality rows carry an orientation flag: ``+1`` means ``a.x <= rhs``,
    ``-1`` means ``a.x >= rhs``.  Each second-order cone block ``(A, b)``
    constrains ``y = A x + b`` to ``y[0] >= norm(y[1:])``.  Integrality
    markers are carried for the branching wrapper but ignored by the solver.
    """

    num_vars: int
    objective: np.ndarray
    objective_offset: float
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    ub_orient: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    soc_blocks: tuple[tuple[sp.csr_matrix, np.ndarray], ...]
    integer_mask: np.ndarray
    var_names: tuple[str, ...]
    eq_names: tuple[str, ...]
    ub_names: tuple[str, ...]
    eq_index: dict[str, int] = field(repr=False)
    ub_index: dict[str, int] = field(repr=False)
    var_index: dict[str, int] = field(repr=False)

    def __post_init__(self) -> None:
        n = self.num_vars
        if self.objective.shape != (n,):
            raise ValueError("objective length does not match variable count")
        if self.a_eq.shape != (len(self.b_eq), n):
            raise ValueError("equality block shape mismatch")
        if self.a_ub.shape != (len(self.b_ub), n):
            raise ValueError("inequality block shape mismatch")
        if len(self.ub_orient) != len(self.b_ub):
            raise ValueError("orientation flags do not match inequality rows")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors do not match variable count")
        if np.any(self.lower > self.upper):
            raise ValueError("crossed variable bounds")
        for a, b in self.soc_blocks:
            if a.shape != (len(b), n):
                raise ValueError("cone block shape mismatch")
            if len(b) < 2:
                raise ValueError("cone block needs at least two rows")

    def with_eq_rhs(self, updates: dict[str, float]) -> "ConicProgram":
        """Copy of the program with new right-hand sides for named equality rows."""
        b = self.b_eq.copy()
        for name, value in updates.items():
            b[self.eq_index[name]] = value
        return dataclasses.replace(self, b_eq=b)

    def with_ub_rhs(self, updates: dict[str, float]) -> "ConicProgram":
        """Copy of the program with new right-hand sides for named inequality rows."""
        b = self.b_ub.copy()
        for name, value in updates.items():
            b[self.ub_index[name]] = value
        return dataclasses.replace(self, b_ub=b)

    def with_bounds(self, updates: dict[str, tuple[float, float]]) -> "ConicProgram":
        """Copy of the program with new (lower, upper) bounds for named variables."""
        lo = self.lower.copy()
        hi = self.upper.copy()
        for name, (a, b) in updates.items():
            j = self.var_index[name]
            lo[j] = a
            hi[j] = b
        return dataclasses.replace(self, lower=lo, upper=hi)


class ProgramBuilder:
    """Accumulates variables and rows, then freezes them into a ConicProgram."""

    def __init__(self) -> None:
        self._obj: list[float] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._integer: list[bool] = []
        self._var_names: list[str] = []
        self._var_index: dict[str, int] = {}
        self._eq_rows: list[dict[int, float]] = []
        self._eq_rhs: list[float] = []
        self._eq_names: list[str] = []
        self._ub_rows: list[dict[int, float]] = []
        self._ub_rhs: list[float] = []
        self._ub_orient: list[int] = []
        self._ub_names: list[str] = []
        self._soc: list[list[tuple[dict[int, float], float]]] = []
        self._offset = 0.0

    @property
    def num_vars(self) -> int:
        return len(self._obj)

    def add_var(
        self,
        name: str,
        lower: float = 0.0,
        upper: float = math.inf,
        objective: float = 0.0,
        integer: bool = False,
    ) -> int:
        if name in self._var_index:
            raise ValueError(f"duplicate variable name {name!r}")
        j = len(self._obj)
        self._var_index[name] = j
        self._var_names.append(name)
        self._obj.append(float(objective))
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._integer.append(bool(integer))
        return j

    def add_objective_offset(self, value: float) -> None:
        self._offset += float(value)

    def add_eq(self, name: str, coeffs: dict[int, float], rhs: float) -> int:
        self._eq_rows.append(dict(coeffs))
        self._eq_rhs.append(float(rhs))
        self._eq_names.append(name)
        return len(self._eq_rhs) - 1

    def add_le(self, name: str, coeffs: dict[int, float], rhs: float) -> int:
        return self._add_ub(name, coeffs, rhs, +1)

    def add_ge(self, name: str, coeffs: dict[int, float], rhs: float) -> int:
        return self._add_ub(name, coeffs, rhs, -1)

    def _add_ub(self, name: str, coeffs: dict[int, float], rhs: float, orient: int) -> int:
        self._ub_rows.append(dict(coeffs))
        self._ub_rhs.append(float(rhs))
        self._ub_orient.append(orient)
        self._ub_names.append(name)
        return len(self._ub_rhs) - 1

    def add_soc(self, rows: list[tuple[dict[int, float], float]]) -> int:
        """Constrain ``y[0] >= norm(y[1:])`` where ``y[k] = rows[k]`` affine."""
        if len(rows) < 2:
            raise ValueError("cone needs at least two rows")
        self._soc.append([(dict(c), float(b)) for c, b in rows])
        return len(self._soc) - 1

    def build(self) -> ConicProgram:
        n = len(self._obj)

        def to_csr(rows: list[dict[int, float]]) -> sp.csr_matrix:
            data: list[float] = []
            indices: list[int] = []
            indptr = [0]
            for row in rows:
                for j in sorted(row):
                    indices.append(j)
                    data.append(row[j])
                indptr.append(len(indices))
            return sp.csr_matrix(
                (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
                shape=(len(rows), n),
            )

        blocks = []
        for rows in self._soc:
            mat = to_csr([c for c, _ in rows])
            const = np.array([b for _, b in rows], dtype=float)
            blocks.append((mat, const))
        return ConicProgram(
            num_vars=n,
            objective=np.array(self._obj, dtype=float),
            objective_offset=self._offset,
            a_eq=to_csr(self._eq_rows),
            b_eq=np.array(self._eq_rhs, dtype=float),
            a_ub=to_csr(self._ub_rows),
            b_ub=np.array(self._ub_rhs, dtype=float),
            ub_orient=np.array(self._ub_orient, dtype=np.int64),
            lower=np.array(self._lower, dtype=float),
            upper=np.array(self._upper, dtype=float),
            soc_blocks=tuple(blocks),
            integer_mask=np.array(self._integer, dtype=bool),
            var_names=tuple(self._var_names),
            eq_names=tuple(self._eq_names),
            ub_names=tuple(self._ub_names),
            eq_index={s: i for i, s in enumerate(self._eq_names)},
            ub_index={s: i for i, s in enumerate(self._ub_names)},
            var_index=dict(self._var_index),
        )


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one solve: status, primal/dual values and KKT residuals.

    ``status`` is one of ``optimal``, ``infeasible``, ``unbounded``,
    ``limit``.  Row duals follow the declared-orientation sensitivity
    convention documented at module level.  ``kkt`` holds relative primal,
    dual and gap residuals; when status is ``optimal`` all three are at or
    below the requested tolerance.  ``certificate`` carries an infeasibility
    ray when the backend produced one.
    """

    status: str
    objective: float
    x: np.ndarray
    duals_eq: np.ndarray
    duals_ub: np.ndarray
    duals_lower: np.ndarray
    duals_upper: np.ndarray
    soc_duals: tuple[np.ndarray, ...]
    kkt: dict[str, float]
    diagnostics: str
    certificate: np.ndarray | None
    iterations: int

    def dual_eq(self, program: ConicProgram, name: str) -> float:
        return float(self.duals_eq[program.eq_index[name]])

    def dual_ub(self, program: ConicProgram, name: str) -> float:
        return float(self.duals_ub[program.ub_index[name]])


def evaluate_solution(program: ConicProgram, x: np.ndarray) -> dict[str, float]:
    """Worst constraint violations of a candidate point, by constraint family."""
    out: dict[str, float] = {}
    out["eq"] = float(np.max(np.abs(program.a_eq @ x - program.b_eq), initial=0.0))
    if len(program.b_ub):
        resid = (program.a_ub @ x - program.b_ub) * program.ub_orient
        out["ub"] = float(np.max(resid, initial=0.0))
    else:
        out["ub"] = 0.0
    lo = np.where(np.isfinite(program.lower), program.lower - x, 0.0)
    hi = np.where(np.isfinite(program.upper), x - program.upper, 0.0)
    out["bounds"] = float(max(np.max(lo, initial=0.0), np.max(hi, initial=0.0)))
    worst_cone = 0.0
    for a, b in program.soc_blocks:
        y = a @ x + b
        worst_cone = max(worst_cone, float(np.linalg.norm(y[1:]) - y[0]))
    out["cone"] = worst_cone
    out["objective"] = float(program.objective @ x + program.objective_offset)
    return out


def solve_conic(
    program: ConicProgram,
    tol: float = 1e-8,
    time_limit: float | None = None,
    backend: str | None = None,
) -> SolveReport:
    """Solve the continuous relaxation of ``program`` to primal/dual optimality.

    ``backend`` forces ``"highs"`` or ``"clarabel"``; by default pure linear
    programs use HiGHS and anything with cone blocks uses Clarabel.  Identical
    inputs produce bit-for-bit identical reports.
    """
    if backend is None:
        backend = "clarabel" if program.soc_blocks else "highs"
    if backend == "highs":
        if program.soc_blocks:
            raise ValueError("the linear backend cannot handle cone blocks")
        return _solve_highs(program, tol, time_limit)
    if backend == "clarabel":
        return _solve_clarabel(program, tol, time_limit)
    raise ValueError(f"unknown backend {backend!r}")


def _limit_report(program: ConicProgram, message: str) -> SolveReport:
    n = program.num_vars
    return SolveReport(
        status="limit",
        objective=math.nan,
        x=np.full(n, math.nan),
        duals_eq=np.full(len(program.b_eq), math.nan),
        duals_ub=np.full(len(program.b_ub), math.nan),
        duals_lower=np.full(n, math.nan),
        duals_upper=np.full(n, math.nan),
        soc_duals=tuple(np.full(len(b), math.nan) for _, b in program.soc_blocks),
        kkt={"primal": math.nan, "dual": math.nan, "gap": math.nan},
        diagnostics=message,
        certificate=None,
        iterations=0,
    )


def _solve_highs(program: ConicProgram, tol: float, time_limit: float | None) -> SolveReport:
    n = program.num_vars
    # Feed the ge rows to the solver in <= form; flip their duals back after.
    orient = program.ub_orient.astype(float)
    a_ub = sp.diags(orient) @ program.a_ub if len(program.b_ub) else program.a_ub
    b_ub = program.b_ub * orient
    solver_tol = min(max(tol * 0.1, 1e-10), 1e-8)
    options = {
        "presolve": True,
        "primal_feasibility_tolerance": solver_tol,
        "dual_feasibility_tolerance": solver_tol,
    }
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = linprog(
        c=program.objective,
        A_ub=a_ub if len(b_ub) else None,
        b_ub=b_ub if len(b_ub) else None,
        A_eq=program.a_eq if len(program.b_eq) else None,
        b_eq=program.b_eq if len(program.b_eq) else None,
        bounds=np.column_stack([program.lower, program.upper]),
        method="highs",
        options=options,
    )
    if res.status == 2:
        report = _limit_report(program, f"highs: {res.message}")
        return dataclasses.replace(report, status="infeasible")
    if res.status == 3:
        report = _limit_report(program, f"highs: {res.message}")
        return dataclasses.replace(report, status="unbounded")
    if res.status != 0 or res.x is None:
        return _limit_report(program, f"highs: {res.message}")
    x = np.asarray(res.x, dtype=float)
    y_eq = np.asarray(res.eqlin.marginals, dtype=float) if len(program.b_eq) else np.zeros(0)
    m_ub = np.asarray(res.ineqlin.marginals, dtype=float) if len(b_ub) else np.zeros(0)
    z_lo = np.asarray(res.lower.marginals, dtype=float)
    z_hi = np.asarray(res.upper.marginals, dtype=float)
    # Marginals are sensitivities in the solver's <= form already; undo the flip.
    duals_ub = m_ub * orient if len(b_ub) else m_ub

    stationarity = program.objective.copy()
    if len(program.b_eq):
        stationarity -= program.a_eq.T @ y_eq
    if len(b_ub):
        stationarity -= a_ub.T @ m_ub
    stationarity -= z_lo + z_hi
    obj = float(program.objective @ x + program.objective_offset)
    dual_obj = program.objective_offset
    if len(program.b_eq):
        dual_obj += float(program.b_eq @ y_eq)
    if len(b_ub):
        dual_obj += float(b_ub @ m_ub)
    finite_lo = np.isfinite(program.lower)
    finite_hi = np.isfinite(program.upper)
    dual_obj += float(program.lower[finite_lo] @ z_lo[finite_lo])
    dual_obj += float(program.upper[finite_hi] @ z_hi[finite_hi])

    viol = evaluate_solution(program, x)
    scale_b = 1.0 + max(
        float(np.max(np.abs(program.b_eq), initial=0.0)),
        float(np.max(np.abs(program.b_ub), initial=0.0)),
    )
    scale_c = 1.0 + float(np.max(np.abs(program.objective), initial=0.0))
    kkt = {
        "primal": max(viol["eq"], viol["ub"], viol["bounds"]) / scale_b,
        "dual": float(np.max(np.abs(stationarity), initial=0.0)) / scale_c,
        "gap": abs(obj - dual_obj) / (1.0 + abs(obj)),
    }
    status = "optimal" if max(kkt.values()) <= tol else "limit"
    message = res.message if status != "optimal" else ""
    return SolveReport(
        status=status,
        objective=obj,
        x=x,
        duals_eq=y_eq,
        duals_ub=duals_ub,
        duals_lower=z_lo,
        duals_upper=z_hi,
        soc_duals=(),
        kkt=kkt,
        diagnostics=message,
        certificate=None,
        iterations=int(getattr(res, "nit", 0)),
    )


def _solve_clarabel(program: ConicProgram, tol: float, time_limit: float | None) -> SolveReport:
    import clarabel

    n = program.num_vars
    cones = []
    mats: list[sp.csr_matrix] = []
    rhs: list[np.ndarray] = []

    m_eq = len(program.b_eq)
    if m_eq:
        cones.append(clarabel.ZeroConeT(m_eq))
        mats.append(program.a_eq)
        rhs.append(program.b_eq)

    # Nonnegative block: user rows in <= form, then finite bounds as rows.
    orient = program.ub_orient.astype(float)
    nn_mats: list[sp.csr_matrix] = []
    nn_rhs: list[np.ndarray] = []
    if len(program.b_ub):
        nn_mats.append(sp.diags(orient) @ program.a_ub)
        nn_rhs.append(program.b_ub * orient)
    finite_hi = np.flatnonzero(np.isfinite(program.upper))
    if len(finite_hi):
        sel = sp.csr_matrix(
            (np.ones(len(finite_hi)), (np.arange(len(finite_hi)), finite_hi)),
            shape=(len(finite_hi), n),
        )
        nn_mats.append(sel)
        nn_rhs.append(program.upper[finite_hi])
    finite_lo = np.flatnonzero(np.isfinite(program.lower))
    if len(finite_lo):
        sel = sp.csr_matrix(
            (-np.ones(len(finite_lo)), (np.arange(len(finite_lo)), finite_lo)),
            shape=(len(finite_lo), n),
        )
        nn_mats.append(sel)
        nn_rhs.append(-program.lower[finite_lo])
    m_nn = sum(m.shape[0] for m in nn_mats)
    if m_nn:
        cones.append(clarabel.NonnegativeConeT(m_nn))
        mats.extend(nn_mats)
        rhs.extend(nn_rhs)

    for a, b in program.soc_blocks:
        cones.append(clarabel.SecondOrderConeT(len(b)))
        mats.append(-a)
        rhs.append(b)

    a_all = sp.vstack(mats, format="csc") if mats else sp.csc_matrix((0, n))
    b_all = np.concatenate(rhs) if rhs else np.zeros(0)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    solver_tol = max(tol * 0.1, 1e-12)
    settings.tol_gap_abs = solver_tol
    settings.tol_gap_rel = solver_tol
    settings.tol_feas = solver_tol
    if time_limit is not None:
        settings.time_limit = float(time_limit)
    solver = clarabel.DefaultSolver(
        sp.csc_matrix((n, n)), program.objective, a_all, b_all, cones, settings
    )
    sol = solver.solve()
    status_name = str(sol.status)

    if status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        report = _limit_report(program, f"clarabel: {status_name}")
        return dataclasses.replace(
            report, status="infeasible", certificate=np.asarray(sol.z, dtype=float)
        )
    if status_name in ("DualInfeasible", "AlmostDualInfeasible"):
        report = _limit_report(program, f"clarabel: {status_name}")
        return dataclasses.replace(
            report, status="unbounded", certificate=np.asarray(sol.x, dtype=float)
        )
    if status_name not in ("Solved", "AlmostSolved"):
        return _limit_report(program, f"clarabel: {status_name}")

    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    pos = 0
    duals_eq = -z[pos : pos + m_eq]
    pos += m_eq
    duals_ub = np.zeros(len(program.b_ub))
    if len(program.b_ub):
        duals_ub = -z[pos : pos + len(program.b_ub)] * orient
        pos += len(program.b_ub)
    duals_upper = np.zeros(n)
    if len(finite_hi):
        duals_upper[finite_hi] = -z[pos : pos + len(finite_hi)]
        pos += len(finite_hi)
    duals_lower = np.zeros(n)
    if len(finite_lo):
        duals_lower[finite_lo] = z[pos : pos + len(finite_lo)]
        pos += len(finite_lo)
    soc_duals = []
    for _, b in program.soc_blocks:
        soc_duals.append(z[pos : pos + len(b)].copy())
        pos += len(b)

    obj = float(program.objective @ x + program.objective_offset)
    dual_obj = float(-b_all @ z) + program.objective_offset
    stationarity = program.objective + a_all.T @ z
    viol = evaluate_solution(program, x)
    scale_b = 1.0 + float(np.max(np.abs(b_all), initial=0.0))
    scale_c = 1.0 + float(np.max(np.abs(program.objective), initial=0.0))
    kkt = {
        "primal": max(viol["eq"], viol["ub"], viol["bounds"], viol["cone"]) / scale_b,
        "dual": float(np.max(np.abs(stationarity), initial=0.0)) / scale_c,
        "gap": abs(obj - dual_obj) / (1.0 + abs(obj)),
    }
    status = "optimal" if status_name == "Solved" and max(kkt.values()) <= tol else "limit"
    message = "" if status == "optimal" else f"clarabel: {status_name}, kkt={kkt}"
    return SolveReport(
        status=status,
        objective=obj,
        x=x,
        duals_eq=np.asarray(duals_eq, dtype=float),
        duals_ub=np.asarray(duals_ub, dtype=float),
        duals_lower=duals_lower,
        duals_upper=duals_upper,
        soc_duals=tuple(soc_duals),
        kkt=kkt,
        diagnostics=message,
        certificate=None,
        iterations=int(sol.iterations),
    )


def dump_program(program: ConicProgram, path: str) -> None:
    """Write the program as sorted coordinate-form text for external checking."""
    lines = [
        f"vars {program.num_vars} eq {len(program.b_eq)} ineq {len(program.b_ub)} "
        f"soc {len(program.soc_blocks)}",
        f"offset {program.objective_offset!r}",
    ]
    for j in np.flatnonzero(program.objective):
        lines.append(f"obj {j} {float(program.objective[j])!r}")
    coo = program.a_eq.tocoo()
    for i, j, v in sorted(zip(coo.row, coo.col, coo.data)):
        lines.append(f"eq {i} {j} {float(v)!r}")
    for i, v in enumerate(program.b_eq):
        lines.append(f"eqrhs {i} {float(v)!r}")
    coo = program.a_ub.tocoo()
    for i, j, v in sorted(zip(coo.row, coo.col, coo.data)):
        lines.append(f"ineq {i} {j} {float(v)!r}")
    for i, v in enumerate(program.b_ub):
        sense = "le" if program.ub_orient[i] > 0 else "ge"
        lines.append(f"ineqrhs {i} {sense} {float(v)!r}")
    for j in range(program.num_vars):
        lines.append(f"bound {j} {float(program.lower[j])!r} {float(program.upper[j])!r}")
    for k, (a, b) in enumerate(program.soc_blocks):
        coo = a.tocoo()
        for i, j, v in sorted(zip(coo.row, coo.col, coo.data)):
            lines.append(f"soc {k} {i} {j} {float(v)!r}")
        for i, v in enumerate(b):
            lines.append(f"socconst {k} {i} {float(v)!r}")
    for j in np.flatnonzero(program.integer_mask):
        lines.append(f"integer {j}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
