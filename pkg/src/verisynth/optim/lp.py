"""Linear programs and a bounded two-phase simplex with Bland's rule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DENSE_LIMIT = 500
_TOL = 1e-9
_TIE_TOL = 1e-12


class LpError(RuntimeError):
    """Numerical failure of the simplex method."""


@dataclass
class LinearProgram:
    """min/max c.x subject to rows (coeffs, rel, rhs) and variable bounds.

    Variables are created with :meth:`add_var`; rows refer to them by index.
    """

    sense: str = "min"
    names: list = field(default_factory=list)
    lo: list = field(default_factory=list)
    hi: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (dict idx->coef, rel, rhs, name)

    def add_var(self, name: str | None = None, lo: float = 0.0, hi: float = math.inf,
                obj: float = 0.0) -> int:
        if lo > hi:
            raise ValueError(f"variable {name}: lower bound {lo} exceeds upper bound {hi}")
        self.names.append(name if name is not None else f"x{len(self.names)}")
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.obj.append(float(obj))
        return len(self.names) - 1

    def add_constraint(self, coeffs: Mapping[int, float], rel: str, rhs: float,
                       name: str | None = None) -> int:
        if rel not in ("<=", ">=", "="):
            raise ValueError(f"unknown relation {rel!r}")
        row = {}
        for j, c in coeffs.items():
            if not 0 <= j < len(self.names):
                raise ValueError(f"constraint references undeclared variable {j}")
            if not math.isfinite(c):
                raise ValueError("non-finite constraint coefficient")
            if c != 0.0:
                row[j] = row.get(j, 0.0) + float(c)
        if not math.isfinite(rhs):
            raise ValueError("non-finite right-hand side")
        self.rows.append((row, rel, float(rhs), name or f"c{len(self.rows)}"))
        return len(self.rows) - 1

    def set_obj(self, j: int, c: float):
        self.obj[j] = float(c)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def dense(self):
        """(c, A, rel, b, lo, hi) as numpy arrays."""
        A = np.zeros((len(self.rows), self.n_vars))
        for i, (row, _, _, _) in enumerate(self.rows):
            for j, c in row.items():
                A[i, j] = c
        rel = [r[1] for r in self.rows]
        b = np.array([r[2] for r in self.rows])
        return np.array(self.obj), A, rel, b, np.array(self.lo), np.array(self.hi)

    def value(self, x) -> float:
        return float(np.dot(self.obj, x))

    def violation(self, x) -> float:
        """Largest bound or row violation of ``x``."""
        x = np.asarray(x, dtype=float)
        v = max(0.0, float(np.max(np.array(self.lo) - x, initial=0.0)),
                float(np.max(x - np.array(self.hi), initial=0.0)))
        for row, rel, rhs, _ in self.rows:
            lhs = sum(c * x[j] for j, c in row.items())
            if rel == "<=":
                v = max(v, lhs - rhs)
            elif rel == ">=":
                v = max(v, rhs - lhs)
            else:
                v = max(v, abs(lhs - rhs))
        return v


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded
    objective: float = math.nan
    x: np.ndarray | None = None
    names: list | None = None
    iterations: int = 0
    backend: str = "simplex"

    @property
    def assignment(self) -> dict:
        if self.x is None:
            return {}
        return dict(zip(self.names, self.x.tolist()))

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, backend: str = "auto") -> LpResult:
    """Solve ``lp``.  The dense simplex handles up to ``DENSE_LIMIT`` variables;
    larger programs go to the sparse HiGHS solver shipped with scipy."""
    if backend == "auto":
        if lp.n_vars > DENSE_LIMIT:
            return _solve_highs(lp)
        try:
            res = _solve_simplex(lp)
        except LpError:
            return _solve_highs(lp)
        # negative verdicts of the dense solver are confirmed by HiGHS
        return res if res.ok else _solve_highs(lp)
    if backend == "highs":
        return _solve_highs(lp)
    return _solve_simplex(lp)


# -- standard form ------------------------------------------------------------

def _standard_form(lp: LinearProgram):
    """Map to min c'y, A'y = b', y >= 0.  Returns the data plus a recovery map."""
    c, A, rel, b, lo, hi = lp.dense()
    if lp.sense == "max":
        c = -c
    m, n = A.shape
    cols, cost, shift = [], [], np.zeros(n)
    recover = []  # per original var: list of (col index, sign)
    extra_rows = []  # (col, ub) for finite upper bounds
    for j in range(n):
        if math.isfinite(lo[j]):
            shift[j] = lo[j]
            cols.append(A[:, j])
            cost.append(c[j])
            recover.append([(len(cols) - 1, 1.0)])
            if math.isfinite(hi[j]):
                extra_rows.append((len(cols) - 1, hi[j] - lo[j]))
        elif math.isfinite(hi[j]):
            # x = hi - y
            shift[j] = hi[j]
            cols.append(-A[:, j])
            cost.append(-c[j])
            recover.append([(len(cols) - 1, -1.0)])
        else:
            cols.append(A[:, j])
            cost.append(c[j])
            cols.append(-A[:, j])
            cost.append(-c[j])
            recover.append([(len(cols) - 2, 1.0), (len(cols) - 1, -1.0)])
    nv = len(cols)
    Ab = np.column_stack(cols) if cols else np.zeros((m, 0))
    rhs = b - A @ shift
    rels = list(rel)
    for col, ub in extra_rows:
        row = np.zeros(nv)
        row[col] = 1.0
        Ab = np.vstack([Ab, row])
        rhs = np.append(rhs, ub)
        rels.append("<=")
    # slacks
    m2 = Ab.shape[0]
    n_slack = sum(r != "=" for r in rels)
    S = np.zeros((m2, n_slack))
    k = 0
    for i, r in enumerate(rels):
        if r == "<=":
            S[i, k] = 1.0
            k += 1
        elif r == ">=":
            S[i, k] = -1.0
            k += 1
    Afull = np.hstack([Ab, S])
    cfull = np.concatenate([np.array(cost), np.zeros(n_slack)])
    neg = rhs < 0
    Afull[neg] *= -1
    rhs = np.where(neg, -rhs, rhs)
    const = float(np.dot(c, shift))
    return cfull, Afull, rhs, recover, shift, const


def _pivot(T: np.ndarray, r: int, q: int):
    T[r] /= T[r, q]
    col = T[:, q].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _simplex_phase(T, basis, ncols, max_iter, allowed):
    """Bland-rule simplex on tableau ``T`` whose last row is the reduced cost."""
    it = 0
    m = T.shape[0] - 1
    while True:
        rc = T[-1, :ncols]
        cand = np.nonzero((rc < -_TOL) & allowed)[0]
        if cand.size == 0:
            return "optimal", it
        q = int(cand[0])
        colq = T[:m, q]
        pos = colq > _TOL
        if not pos.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colq[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + _TIE_TOL * max(1.0, abs(best)))[0]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, r, q)
        basis[r] = q
        it += 1
        if it > max_iter:
            raise LpError("simplex iteration limit reached")


def _refactor(A, b, c, basis):
    B = A[:, basis]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        raise LpError("singular basis during refactorization") from None
    m = len(basis)
    T = np.zeros((m + 1, A.shape[1] + 1))
    T[:m, :-1] = Binv @ A
    T[:m, -1] = Binv @ b
    cb = c[basis]
    T[-1, :-1] = c - cb @ T[:m, :-1]
    T[-1, -1] = -cb @ T[:m, -1]
    return T


def _solve_simplex(lp: LinearProgram, max_refactor: int = 3) -> LpResult:
    c, A, b, recover, shift, const = _standard_form(lp)
    m, n = A.shape
    max_iter = 50 * (m + n) + 1000
    # phase 1 with one artificial per row
    Aart = np.hstack([A, np.eye(m)])
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n + m] = Aart
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    allowed = np.ones(n + m, dtype=bool)
    st1, it1 = _simplex_phase(T, basis, n + m, max_iter, allowed)
    if st1 == "unbounded":  # impossible in exact arithmetic
        raise LpError("phase 1 reported an unbounded ray (tiny pivots)")
    if -T[-1, -1] > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LpResult("infeasible", iterations=it1, names=list(lp.names))
    # drive artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            nz = np.nonzero(np.abs(T[r, :n]) > 1e-9)[0]
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                keep.append(r)
        else:
            keep.append(r)
    rows = keep
    A2, b2 = A[rows], b[rows]
    basis2 = [basis[r] for r in rows]
    T2 = np.zeros((len(rows) + 1, n + 1))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, -1] = T[rows, -1]
    cb = c[basis2]
    T2[-1, :n] = c - cb @ T2[:-1, :n]
    T2[-1, -1] = -cb @ T2[:-1, -1]
    it2 = 0
    allowed = np.ones(n, dtype=bool)
    for attempt in range(max_refactor + 1):
        status, k = _simplex_phase(T2, basis2, n, max_iter, allowed)
        it2 += k
        if status == "unbounded":
            return LpResult("unbounded", iterations=it1 + it2, names=list(lp.names))
        y = np.zeros(n)
        y[basis2] = T2[:-1, -1]
        resid = float(np.abs(A2 @ y - b2).max(initial=0.0))
        scale = max(1.0, float(np.abs(b2).max(initial=0.0)))
        if resid <= 1e-7 * scale and y.min(initial=0.0) >= -1e-7 * scale:
            break
        if attempt == max_refactor:
            raise LpError(f"numerical instability: residual {resid:.3e} after "
                          f"{max_refactor} refactorizations")
        T2 = _refactor(A2, b2, c, basis2)
    y = np.maximum(y, 0.0)
    x = shift.copy()
    for j, parts in enumerate(recover):
        for col, sgn in parts:
            x[j] += sgn * y[col]
    lo, hi = np.array(lp.lo), np.array(lp.hi)
    x = np.clip(x, lo, hi)
    return LpResult("optimal", lp.value(x), x, list(lp.names), it1 + it2)


def _solve_highs(lp: LinearProgram) -> LpResult:
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    n = lp.n_vars
    c = np.array(lp.obj) * (-1.0 if lp.sense == "max" else 1.0)
    ub_r, ub_c, ub_v, ub_b = [], [], [], []
    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    for row, rel, rhs, _ in lp.rows:
        if rel == "=":
            i = len(eq_b)
            eq_b.append(rhs)
            for j, v in row.items():
                eq_r.append(i), eq_c.append(j), eq_v.append(v)
        else:
            sgn = 1.0 if rel == "<=" else -1.0
            i = len(ub_b)
            ub_b.append(sgn * rhs)
            for j, v in row.items():
                ub_r.append(i), ub_c.append(j), ub_v.append(sgn * v)
    A_ub = coo_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), n)).tocsr() if ub_b else None
    A_eq = coo_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), n)).tocsr() if eq_b else None
    bounds = [(None if math.isinf(l) else l, None if math.isinf(h) else h)
              for l, h in zip(lp.lo, lp.hi)]
    res = linprog(c, A_ub=A_ub, b_ub=ub_b or None, A_eq=A_eq, b_eq=eq_b or None,
                  bounds=bounds, method="highs")
    if res.status == 2:
        # HiGHS may flag "infeasible or unbounded"; settle it with a zero objective
        feas = linprog(np.zeros(n), A_ub=A_ub, b_ub=ub_b or None, A_eq=A_eq,
                       b_eq=eq_b or None, bounds=bounds, method="highs")
        status = "unbounded" if feas.status == 0 else "infeasible"
        return LpResult(status, names=list(lp.names), backend="highs")
    if res.status == 3:
        return LpResult("unbounded", names=list(lp.names), backend="highs")
    if res.status != 0:
        raise LpError(f"HiGHS failed: {res.message}")
    x = np.asarray(res.x)
    return LpResult("optimal", lp.value(x), x, list(lp.names), int(res.nit), "highs")


# -- fixed-format dump ------------------------------------------------------------

def write_mps(lp: LinearProgram, name: str = "VERISYNTH") -> str:
    """Fixed-column MPS text: ROWS, COLUMNS, RHS and BOUNDS sections.

    The objective is always written as a minimization; maximization flips
    the objective coefficients and says so in a comment line.
    """
    def f(x):
        return f"{x:.12g}"

    sgn = -1.0 if lp.sense == "max" else 1.0
    out = [f"NAME          {name}"]
    if lp.sense == "max":
        out.append("* objective negated: original sense is MAX")
    out.append("ROWS")
    out.append(" N  OBJ")
    tag = {"<=": "L", ">=": "G", "=": "E"}
    for _, rel, _, rname in lp.rows:
        out.append(f" {tag[rel]}  {rname}")
    out.append("COLUMNS")
    col_entries: dict[int, list] = {j: [] for j in range(lp.n_vars)}
    for row, _, _, rname in lp.rows:
        for j, v in row.items():
            col_entries[j].append((rname, v))
    for j in range(lp.n_vars):
        entries = ([("OBJ", sgn * lp.obj[j])] if lp.obj[j] != 0 else []) + col_entries[j]
        if not entries:
            entries = [("OBJ", 0.0)]
        for rname, v in entries:
            out.append(f"    {lp.names[j]:<8}  {rname:<8}  {f(v):>12}")
    out.append("RHS")
    for _, _, rhs, rname in lp.rows:
        if rhs != 0:
            out.append(f"    {'RHS':<8}  {rname:<8}  {f(rhs):>12}")
    out.append("BOUNDS")
    for j in range(lp.n_vars):
        lo, hi, nm = lp.lo[j], lp.hi[j], lp.names[j]
        if math.isinf(lo) and math.isinf(hi):
            out.append(f" FR BND       {nm:<8}")
            continue
        if lo == hi:
            out.append(f" FX BND       {nm:<8}  {f(lo):>12}")
            continue
        if math.isinf(lo):
            out.append(f" MI BND       {nm:<8}")
        elif lo != 0:
            out.append(f" LO BND       {nm:<8}  {f(lo):>12}")
        if not math.isinf(hi):
            out.append(f" UP BND       {nm:<8}  {f(hi):>12}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
