"""Convex quadratic programs with a diagonal Hessian.

Problems have the form::

    minimize    1/2 * sum_i q_i v_i^2 + c^T v
    subject to  row_lo <= A v <= row_hi
                var_lo <=   v <= var_hi

with ``q >= 0``.  They are solved by a Mehrotra predictor-corrector
interior-point method followed by an active-set polish that projects the
iterate onto its active constraints, so that variables sitting at a bound
come out exactly at that bound.  Variables with ``var_lo == var_hi`` are
eliminated before solving, which makes fixing binaries in branch-and-bound
cheap.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

FEAS_TOL = 1e-8
KKT_TOL = 1e-8

# above this many free variables the Newton system is assembled sparse
_DENSE_LIMIT = 400
_IPM_TOL = 1e-11
_IPM_LOOSE_TOL = 1e-7
_MAX_ITER = 80


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class QpInputError(ValueError):
    pass


@dataclass(frozen=True)
class QpProblem:
    quad: np.ndarray
    cost: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    var_lo: np.ndarray
    var_hi: np.ndarray
    var_names: tuple[str, ...] | None = None

    @classmethod
    def build(cls, quad, cost, A=None, row_lo=None, row_hi=None,
              var_lo=None, var_hi=None, var_names=None) -> "QpProblem":
        quad = np.asarray(quad, dtype=float).ravel()
        cost = np.asarray(cost, dtype=float).ravel()
        nv = cost.size
        if quad.size != nv:
            raise QpInputError("quad and cost must have the same length")
        if A is None:
            A = sp.csr_matrix((0, nv))
        A = sp.csr_matrix(A, dtype=float)
        nr = A.shape[0]
        if A.shape[1] != nv:
            raise QpInputError(f"constraint matrix has {A.shape[1]} columns, expected {nv}")
        row_lo = np.full(nr, -np.inf) if row_lo is None else np.asarray(row_lo, dtype=float).ravel()
        row_hi = np.full(nr, np.inf) if row_hi is None else np.asarray(row_hi, dtype=float).ravel()
        var_lo = np.full(nv, -np.inf) if var_lo is None else np.asarray(var_lo, dtype=float).ravel()
        var_hi = np.full(nv, np.inf) if var_hi is None else np.asarray(var_hi, dtype=float).ravel()
        if row_lo.size != nr or row_hi.size != nr:
            raise QpInputError("row bounds do not match the number of constraint rows")
        if var_lo.size != nv or var_hi.size != nv:
            raise QpInputError("variable bounds do not match the number of variables")
        return cls(quad, cost, A, row_lo, row_hi, var_lo, var_hi,
                   tuple(var_names) if var_names is not None else None)

    @property
    def num_vars(self) -> int:
        return self.cost.size

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def objective(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * np.dot(self.quad * v, v) + np.dot(self.cost, v))

    def violation(self, v: np.ndarray) -> float:
        """Largest absolute violation of any row or bound at ``v``."""
        v = np.asarray(v, dtype=float)
        worst = 0.0
        if self.num_rows:
            av = self.A @ v
            worst = max(worst, float(np.max(np.maximum(self.row_lo - av, av - self.row_hi), initial=0.0)))
        worst = max(worst, float(np.max(np.maximum(self.var_lo - v, v - self.var_hi), initial=0.0)))
        return worst

    def with_bounds(self, var_lo: np.ndarray, var_hi: np.ndarray) -> "QpProblem":
        return replace(self, var_lo=np.asarray(var_lo, dtype=float),
                       var_hi=np.asarray(var_hi, dtype=float))

    def validate(self) -> None:
        for name in ("quad", "cost"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise QpInputError(f"{name} contains NaN or Inf")
        if not np.all(np.isfinite(self.A.data)):
            raise QpInputError("constraint matrix contains NaN or Inf")
        for name in ("row_lo", "row_hi", "var_lo", "var_hi"):
            if np.any(np.isnan(getattr(self, name))):
                raise QpInputError(f"{name} contains NaN")
        if np.any(self.quad < 0):
            raise QpInputError("quadratic diagonal must be nonnegative")
        if np.any(self.row_lo == np.inf) or np.any(self.row_hi == -np.inf):
            raise QpInputError("row bounds must not be +inf below or -inf above")
        if np.any(self.var_lo == np.inf) or np.any(self.var_hi == -np.inf):
            raise QpInputError("variable bounds must not be +inf below or -inf above")

    def dump(self) -> str:
        """Plain-text LP-style listing, for debugging."""
        names = self.var_names or tuple(f"v{i}" for i in range(self.num_vars))
        out = io.StringIO()
        terms = [f"{c:+.12g} {names[i]}" for i, c in enumerate(self.cost) if c != 0.0]
        quads = [f"{q:+.12g} {names[i]}^2" for i, q in enumerate(self.quad) if q != 0.0]
        out.write("minimize\n  " + " ".join(terms) + (" + 1/2 [ " + " ".join(quads) + " ]" if quads else "") + "\n")
        out.write("subject to\n")
        A = self.A.tocsr()
        for r in range(self.num_rows):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            expr = " ".join(f"{A.data[k]:+.12g} {names[A.indices[k]]}" for k in range(lo, hi))
            out.write(f"  r{r}: {self.row_lo[r]:.12g} <= {expr} <= {self.row_hi[r]:.12g}\n")
        out.write("bounds\n")
        for i in range(self.num_vars):
            out.write(f"  {self.var_lo[i]:.12g} <= {names[i]} <= {self.var_hi[i]:.12g}\n")
        return out.getvalue()


@dataclass
class QpSolution:
    status: QpStatus
    primal: np.ndarray | None
    objective: float
    kkt_residual: float
    iterations: int = 0
    # multipliers >= 0 for the lower/upper side of every row and bound
    row_dual_lo: np.ndarray | None = field(default=None, repr=False)
    row_dual_hi: np.ndarray | None = field(default=None, repr=False)
    var_dual_lo: np.ndarray | None = field(default=None, repr=False)
    var_dual_hi: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


@dataclass
class _Standard:
    """Reduced problem ``min 1/2 x'Qx + c'x  s.t.  Gx <= h, Ex = f``."""

    q: np.ndarray
    c: np.ndarray
    G: object
    h: np.ndarray
    E: object
    f: np.ndarray
    # bookkeeping to map inequality multipliers back to the original problem
    kind: np.ndarray  # 0 row upper, 1 row lower, 2 var lower, 3 var upper
    ref: np.ndarray
    eq_ref: np.ndarray
    dense: bool


def _standardize(p: QpProblem, free: np.ndarray, fixed_val: np.ndarray) -> _Standard:
    nf = int(free.sum())
    dense = nf <= _DENSE_LIMIT
    if dense:
        Ad = p.A.toarray()
        Af = Ad[:, free]
        shift = Ad[:, ~free] @ fixed_val[~free]
        touches = np.any(Af != 0.0, axis=1)
    else:
        A = p.A.tocsc()
        Af = A[:, free].tocsr()
        shift = A[:, ~free] @ fixed_val[~free] if (~free).any() else np.zeros(p.num_rows)
        touches = np.diff(Af.indptr) > 0
    lo = p.row_lo - shift
    hi = p.row_hi - shift

    eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    up = np.isfinite(hi) & ~eq
    dn = np.isfinite(lo) & ~eq
    # rows that no longer touch a free variable are checked, then dropped
    bad = (~touches) & ((lo > FEAS_TOL) | (hi < -FEAS_TOL))
    if bad.any():
        raise _Infeasible()
    up &= touches
    dn &= touches
    eq &= touches

    vlo = p.var_lo[free]
    vhi = p.var_hi[free]
    blo = np.isfinite(vlo)
    bhi = np.isfinite(vhi)
    idx = np.arange(nf)

    up_rows = np.flatnonzero(up)
    dn_rows = np.flatnonzero(dn)
    eq_rows = np.flatnonzero(eq)
    blo_idx = idx[blo]
    bhi_idx = idx[bhi]
    if dense:
        I = np.eye(nf)
        G = np.vstack([Af[up_rows], -Af[dn_rows], -I[blo_idx], I[bhi_idx]])
    else:
        I = sp.identity(nf, format="csr")
        G = sp.vstack([Af[up_rows], -Af[dn_rows], -I[blo_idx], I[bhi_idx]], format="csr")
    h = np.concatenate([hi[up_rows], -lo[dn_rows], -vlo[blo], vhi[bhi]])
    kind = np.concatenate([np.zeros(up_rows.size, int), np.ones(dn_rows.size, int),
                           np.full(blo_idx.size, 2), np.full(bhi_idx.size, 3)])
    ref = np.concatenate([up_rows, dn_rows, blo_idx, bhi_idx])
    E = Af[eq_rows]
    return _Standard(p.quad[free], p.cost[free], G, h, E, lo[eq_rows], kind, ref, eq_rows, dense)


class _Infeasible(Exception):
    pass


class _KktSystem:
    """Factorization of ``[[H, E'], [E, -reg]]`` for one interior-point iteration."""

    def __init__(self, st: _Standard, w: np.ndarray, reg: float):
        G, E = st.G, st.E
        n = st.c.size
        p = st.f.size
        self.n = n
        if st.dense:
            H = (G.T * w) @ G
            H[np.diag_indices(n)] += st.q + reg
            if p == 0:
                for shift in (0.0, 1e-13, 1e-10):
                    # a relative diagonal shift rescues matrices that are only
                    # numerically indefinite; refinement removes its effect
                    Hs = H if shift == 0.0 else H + np.diag(shift * np.diag(H))
                    try:
                        self._chol = scipy.linalg.cho_factor(Hs, check_finite=False)
                        self._lu = None
                        return
                    except np.linalg.LinAlgError:
                        pass
                K = H
            else:
                K = np.block([[H, E.T], [E, -reg * np.eye(p)]])
            self._chol = None
            self._lu = scipy.linalg.lu_factor(K, check_finite=False)
        else:
            H = (G.T @ sp.diags(w) @ G) + sp.diags(st.q + reg)
            if p:
                K = sp.bmat([[H, E.T], [E, -reg * sp.identity(p)]], format="csc")
            else:
                K = H.tocsc()
            self._chol = None
            self._lu = None
            self._splu = spla.splu(K)

    def solve(self, rhs_x: np.ndarray, rhs_y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._chol is not None:
            return scipy.linalg.cho_solve(self._chol, rhs_x, check_finite=False), rhs_y[:0]
        rhs = np.concatenate([rhs_x, rhs_y])
        if self._lu is not None:
            sol = scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)
        else:
            sol = self._splu.solve(rhs)
        return sol[: self.n], sol[self.n:]


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _ipm(st: _Standard, x0: np.ndarray | None):
    n = st.c.size
    m = st.h.size
    G, E, h, f, q, c = st.G, st.E, st.h, st.f, st.q, st.c
    x = np.zeros(n) if x0 is None else x0.copy()
    y = np.zeros(f.size)
    if m == 0:
        # equality constrained (or unconstrained) quadratic: one linear solve
        kkt = _KktSystem(st, np.zeros(0), 1e-14)
        rp = (E @ x - f) if f.size else np.zeros(0)
        dx, dy = kkt.solve(-(q * x + c), -rp)
        x = x + dx
        y = dy
        rd = q * x + c + (E.T @ y if f.size else 0.0)
        ok = (np.all(np.isfinite(x))
              and np.max(np.abs(rd), initial=0.0) <= 1e-9 * (1.0 + np.max(np.abs(c), initial=0.0)))
        return x, np.zeros(0), np.zeros(0), y, 1, ok

    Gx = G @ x
    s = np.maximum(h - Gx, 1.0)
    lam = np.ones(m)
    scale_c = 1.0 + np.max(np.abs(c), initial=0.0)
    scale_h = 1.0 + np.max(np.abs(h), initial=0.0)
    scale_f = 1.0 + np.max(np.abs(f), initial=0.0)
    best = (np.inf, x, s, lam, y)
    it = 0
    for it in range(1, _MAX_ITER + 1):
        rd = q * x + c + G.T @ lam + (E.T @ y if f.size else 0.0)
        rp = (E @ x - f) if f.size else np.zeros(0)
        rs = G @ x + s - h
        mu = float(np.dot(s, lam) / m)
        merit = max(np.max(np.abs(rd), initial=0.0) / scale_c,
                    np.max(np.abs(rs), initial=0.0) / scale_h,
                    np.max(np.abs(rp), initial=0.0) / scale_f,
                    float(np.max(s * lam)) / (1.0 + abs(float(0.5 * np.dot(q * x, x) + np.dot(c, x)))))
        if merit < best[0]:
            best = (merit, x.copy(), s.copy(), lam.copy(), y.copy())
        if merit <= _IPM_TOL:
            break
        if mu <= 1e-3 * _IPM_TOL and best[0] <= _IPM_LOOSE_TOL:
            # complementarity is exhausted; further steps only add rounding noise
            break
        if not np.all(np.isfinite(x)) or np.max(lam) > 1e14 or np.max(np.abs(x), initial=0.0) > 1e14:
            break
        w = lam / s
        reg = 1e-12 * (1.0 + float(np.max(q, initial=0.0)))
        try:
            kkt = _KktSystem(st, w, reg)
        except (np.linalg.LinAlgError, RuntimeError):
            break

        def newton(r_d, r_p, r_s, r_c):
            # q dx + G'dlam + E'dy = -r_d,  E dx = -r_p,  G dx + ds = -r_s,  lam ds + s dlam = -r_c
            dx, dy = kkt.solve(-r_d - G.T @ (w * r_s - r_c / s), -r_p)
            dlam = w * (G @ dx + r_s) - r_c / s
            ds = -r_s - G @ dx
            return dx, dy, ds, dlam

        def direction(rc):
            dx, dy, ds, dlam = newton(rd, rp, rs, rc)
            for _ in range(3):
                # refine against the full Newton system; the reduced solve loses
                # digits when the barrier weights spread over many decades
                e_d = rd + q * dx + G.T @ dlam + (E.T @ dy if f.size else 0.0)
                e_p = rp + (E @ dx if f.size else 0.0)
                e_s = rs + G @ dx + ds
                e_c = rc + lam * ds + s * dlam
                size = max(np.max(np.abs(e_d), initial=0.0) / scale_c,
                           np.max(np.abs(e_s), initial=0.0) / scale_h,
                           np.max(np.abs(e_p), initial=0.0) / scale_f)
                if size <= 1e-15:
                    break
                cx, cy, cs, cl = newton(e_d, e_p, e_s, e_c)
                dx, dy, ds, dlam = dx + cx, dy + cy, ds + cs, dlam + cl
            return dx, dy, ds, dlam

        dx, dy, ds, dlam = direction(s * lam)
        a_aff = min(_max_step(s, ds), _max_step(lam, dlam))
        mu_aff = float(np.dot(s + a_aff * ds, lam + a_aff * dlam) / m)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dx, dy, ds, dlam = direction(s * lam + ds * dlam - sigma * mu)
        # a common step keeps the dual residual on its linear path; with a
        # curved objective separate primal and dual steps stall it
        a = min(1.0, 0.995 * min(_max_step(s, ds), _max_step(lam, dlam)))
        x = x + a * dx
        s = s + a * ds
        y = y + a * dy
        lam = lam + a * dlam
        s = np.maximum(s, 1e-300)
        lam = np.maximum(lam, 1e-300)
    merit, x, s, lam, y = best
    return x, s, lam, y, it, merit <= _IPM_LOOSE_TOL


def _polish(st: _Standard, x: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Project ``x`` onto the affine hull of the ``active`` inequalities and all equalities."""
    G, E = st.G, st.E
    GA = G[active] if st.dense else G[np.flatnonzero(active)].toarray()
    K = np.vstack([GA, E if st.dense else E.toarray()]) if st.f.size else GA
    if K.shape[0] == 0:
        return x
    r = np.concatenate([st.h[active], st.f]) - K @ x
    d, *_ = np.linalg.lstsq(K, r, rcond=None)
    xp = x + d
    slack = st.h - G @ xp
    tol = 1e-12 * (1.0 + np.abs(st.h))
    if np.any(slack < -tol):
        return x
    return xp


def _crossover(st: _Standard, x: np.ndarray, lam: np.ndarray, s: np.ndarray,
               kkt_tol: float) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Primal active-set iterations started from a near-optimal interior point.

    Returns an exact vertex-face solution ``(x, lam, y)`` or ``None`` if the
    iteration budget runs out.
    """
    G = st.G if st.dense else st.G.toarray()
    E = (st.E if st.dense else st.E.toarray()) if st.f.size else np.zeros((0, x.size))
    h, q, c = st.h, st.q, st.c
    n, m = x.size, h.size
    act_tol = 1e-10 * (1.0 + np.abs(h))

    guess = lam > s
    xp = _polish(st, x, guess)
    if np.all(h - G @ xp >= -act_tol):
        x = xp
    slack = h - G @ x
    cand = np.flatnonzero(slack <= act_tol)
    cand = cand[np.argsort(-lam[cand])]
    # keep a linearly independent working set, preferring large multipliers
    work: list[int] = []
    basis = E.copy()
    for i in cand:
        trial = np.vstack([basis, G[i]])
        if np.linalg.matrix_rank(trial, tol=1e-10) > np.linalg.matrix_rank(basis, tol=1e-10) if basis.size else True:
            work.append(int(i))
            basis = trial
    Qd = np.diag(q)
    for _ in range(5 * (n + m) + 20):
        g = q * x + c
        AW = np.vstack([G[work], E]) if work else E
        k = AW.shape[0]
        K = np.block([[Qd, AW.T], [AW, np.zeros((k, k))]])
        rhs = np.concatenate([-g, np.zeros(k)])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        step = sol[:n]
        if np.linalg.norm(K @ sol - rhs) > 1e-9 * (1.0 + np.linalg.norm(g)):
            # the subproblem is unbounded along a flat direction: follow it
            Z = scipy.linalg.null_space(np.vstack([Qd[q > 0], AW]) if k or (q > 0).any() else np.zeros((0, n)))
            step = -Z @ (Z.T @ g)
            if np.linalg.norm(step) <= 1e-14:
                return None
        if np.max(np.abs(step), initial=0.0) <= 1e-12 * (1.0 + np.max(np.abs(x), initial=0.0)):
            mult = sol[n:]
            lam_w = mult[: len(work)]
            if lam_w.size == 0 or lam_w.min() >= -0.1 * kkt_tol:
                lam_out = np.zeros(m)
                lam_out[work] = np.maximum(lam_w, 0.0)
                return x, lam_out, mult[len(work):]
            work.pop(int(np.argmin(lam_w)))
            continue
        Gp = G @ step
        slack = np.maximum(h - G @ x, 0.0)
        mask = Gp > 1e-14 * (1.0 + np.abs(G).max(axis=1) * np.abs(step).max())
        mask[work] = False
        alpha, block = 1.0, -1
        if mask.any():
            ratios = slack[mask] / Gp[mask]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha, block = float(ratios[j]), int(np.flatnonzero(mask)[j])
        elif np.linalg.norm(K @ sol - rhs) > 1e-9 * (1.0 + np.linalg.norm(g)):
            return None  # unbounded ray; the interior point said otherwise
        x = x + alpha * step
        if block >= 0:
            work.append(block)
    return None


def _phase_one(st: _Standard) -> float:
    """Minimum total infeasibility of ``Gx <= h, Ex = f``."""
    n = st.c.size
    m = st.h.size
    p = st.f.size
    G = sp.csr_matrix(st.G)
    E = sp.csr_matrix(st.E) if p else None
    # variables: x (free), t_ineq (m), t_eq_plus (p), t_eq_minus (p)
    obj = np.concatenate([np.zeros(n), np.ones(m + 2 * p)])
    A_ub = sp.hstack([G, -sp.identity(m), sp.csr_matrix((m, 2 * p))]) if m else None
    A_eq = sp.hstack([E, sp.csr_matrix((p, m)), sp.identity(p), -sp.identity(p)]) if p else None
    bounds = [(None, None)] * n + [(0, None)] * (m + 2 * p)
    res = linprog(obj, A_ub=A_ub, b_ub=st.h if m else None, A_eq=A_eq,
                  b_eq=st.f if p else None, bounds=bounds, method="highs")
    if res.status != 0:
        return np.inf
    return float(res.fun)


def solve_qp(p: QpProblem, warm: np.ndarray | None = None,
             feas_tol: float = FEAS_TOL, kkt_tol: float = KKT_TOL) -> QpSolution:
    """Solve a convex QP with diagonal Hessian.

    ``warm`` is an optional primal starting point; the result does not depend
    on it beyond solver round-off.
    """
    p.validate()
    if warm is not None:
        warm = np.asarray(warm, dtype=float)
        if warm.size != p.num_vars or not np.all(np.isfinite(warm)):
            raise QpInputError("warm start has wrong size or non-finite entries")
    if np.any(p.var_lo > p.var_hi) or np.any(p.row_lo > p.row_hi):
        return QpSolution(QpStatus.INFEASIBLE, None, np.inf, np.inf)

    free = p.var_lo != p.var_hi
    fixed_val = np.where(free, 0.0, p.var_lo)
    try:
        st = _standardize(p, free, fixed_val)
    except _Infeasible:
        return QpSolution(QpStatus.INFEASIBLE, None, np.inf, np.inf)

    x0 = None
    if warm is not None:
        x0 = np.clip(warm[free], p.var_lo[free], p.var_hi[free])
    x, s, lam, y, iters, converged = _ipm(st, x0)

    if not converged:
        infeas = _phase_one(st)
        if infeas > feas_tol:
            return QpSolution(QpStatus.INFEASIBLE, None, np.inf, np.inf, iters)
        if np.all(np.isfinite(x)) and np.max(np.abs(x), initial=0.0) > 1e12:
            return QpSolution(QpStatus.UNBOUNDED, None, -np.inf, np.inf, iters)
        if s.size and np.all(np.isfinite(x)) and np.all(st.h - (st.G @ x) >= -feas_tol):
            exact = _crossover(st, x, lam, s, kkt_tol)
            if exact is not None:
                sol = _finish(p, st, *exact, free, fixed_val, iters)
                if sol.kkt_residual <= kkt_tol and p.violation(sol.primal) <= feas_tol:
                    return sol
        return QpSolution(QpStatus.ITERATION_LIMIT, _assemble(x, free, fixed_val), np.nan, np.inf, iters)

    sol = _finish(p, st, _polish(st, x, lam > s) if s.size else x, lam, y, free, fixed_val, iters)
    if sol.kkt_residual > kkt_tol and s.size:
        exact = _crossover(st, x, lam, s, kkt_tol)
        if exact is not None:
            cand = _finish(p, st, *exact, free, fixed_val, iters)
            if cand.kkt_residual < sol.kkt_residual and p.violation(cand.primal) <= feas_tol:
                sol = cand
    return sol


def _finish(p, st, x, lam, y, free, fixed_val, iters) -> QpSolution:
    v = _assemble(x, free, fixed_val)
    sol = QpSolution(QpStatus.OPTIMAL, v, p.objective(v), 0.0, iters)
    _attach_duals(sol, p, st, lam, y, free)
    sol.kkt_residual = kkt_residual(p, v, sol)
    return sol


def _assemble(x: np.ndarray, free: np.ndarray, fixed_val: np.ndarray) -> np.ndarray:
    v = fixed_val.copy()
    v[free] = x
    return v


def _attach_duals(sol: QpSolution, p: QpProblem, st: _Standard, lam, y, free) -> None:
    nr, nv = p.num_rows, p.num_vars
    r_lo, r_hi = np.zeros(nr), np.zeros(nr)
    v_lo, v_hi = np.zeros(nv), np.zeros(nv)
    free_idx = np.flatnonzero(free)
    for k, target in ((0, r_hi), (1, r_lo)):
        sel = st.kind == k
        np.add.at(target, st.ref[sel], lam[sel])
    for k, target in ((2, v_lo), (3, v_hi)):
        sel = st.kind == k
        np.add.at(target, free_idx[st.ref[sel]], lam[sel])
    if y.size:
        r_hi[st.eq_ref] += np.maximum(y, 0.0)
        r_lo[st.eq_ref] += np.maximum(-y, 0.0)
    # multipliers of fixed variables absorb the remaining gradient
    fixed_idx = np.flatnonzero(~free)
    if fixed_idx.size:
        g = p.quad * sol.primal + p.cost + p.A.T @ (r_hi - r_lo)
        v_lo[fixed_idx] = np.maximum(g[fixed_idx], 0.0)
        v_hi[fixed_idx] = np.maximum(-g[fixed_idx], 0.0)
    sol.row_dual_lo, sol.row_dual_hi = r_lo, r_hi
    sol.var_dual_lo, sol.var_dual_hi = v_lo, v_hi


def kkt_residual(p: QpProblem, v: np.ndarray, sol: QpSolution) -> float:
    """Scaled stationarity / complementarity residual of a solution."""
    grad = (p.quad * v + p.cost + p.A.T @ (sol.row_dual_hi - sol.row_dual_lo)
            + sol.var_dual_hi - sol.var_dual_lo)
    stat = float(np.linalg.norm(grad)) / (1.0 + float(np.linalg.norm(p.cost)))
    av = p.A @ v
    comp = 0.0
    for dual, gap in ((sol.row_dual_hi, p.row_hi - av), (sol.row_dual_lo, av - p.row_lo),
                      (sol.var_dual_hi, p.var_hi - v), (sol.var_dual_lo, v - p.var_lo)):
        finite = np.isfinite(gap)
        if finite.any():
            comp = max(comp, float(np.max(np.abs(dual[finite] * gap[finite]), initial=0.0)))
    return max(stat, comp)
