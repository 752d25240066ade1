"""Convex kernels for alternating sparse-coding minimisation.

Two sub-problems are solved here:

* the activation problem ``min_a ||x - B a||^2 + alpha ||a||_1`` by
  feature-sign search, certified by its KKT conditions;
* the basis problem ``min_B ||X - B A||_F^2  s.t. ||b_j||_2 <= 1`` through its
  Lagrange dual, maximised with a projected Newton method, with accelerated
  projected gradient on the primal as the fallback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)

TOL_KKT = 1e-6
MAX_ITER_ACTIVATION = 1000
MAX_ITER_BASIS = 10_000
_NEWTON_CAP = 100  # Newton needs ~10 steps; beyond this it is cycling
_PG_CAP = 5000
_NORM_SLACK = 1e-9


class SolverError(ValueError):
    """Raised for invalid solver inputs (non-finite values, bad shapes)."""


@dataclass(frozen=True)
class SparseCodingProblem:
    dictionary: np.ndarray
    target: np.ndarray
    alpha: float

    def __post_init__(self):
        B = np.asarray(self.dictionary, dtype=np.float64)
        x = np.asarray(self.target, dtype=np.float64).ravel()
        if B.ndim != 2 or B.shape[0] < 1 or B.shape[1] < 1:
            raise SolverError(f"dictionary must be a non-empty n x S matrix, got shape {B.shape}")
        if x.shape[0] != B.shape[0]:
            raise SolverError(f"target length {x.shape[0]} != dictionary rows {B.shape[0]}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise SolverError(f"alpha must be positive and finite, got {self.alpha}")
        if not np.all(np.isfinite(B)):
            raise SolverError("dictionary contains non-finite values")
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x))[0])
            raise SolverError(f"target contains non-finite value at index {bad}")
        norms = np.linalg.norm(B, axis=0)
        if np.any(norms > 1 + _NORM_SLACK):
            j = int(np.argmax(norms))
            raise SolverError(f"dictionary column {j} has norm {norms[j]:.12g} > 1")
        object.__setattr__(self, "dictionary", B)
        object.__setattr__(self, "target", x)
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass
class SolverReport:
    solution: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool = True
    # objective after every accepted feature-sign step
    trace: list[float] = field(default_factory=list)


@dataclass
class BasisReport:
    basis: np.ndarray
    dual: np.ndarray
    iterations: int
    rank_deficient: bool = False
    converged: bool = True


def objective(dictionary, frames, activations, alpha) -> float:
    """Sum over frames of squared reconstruction error plus ``alpha`` times the L1 norm.

    ``frames`` is n x K (one frame per column) and ``activations`` is S x K.
    1-d inputs are treated as a single frame.
    """
    B = np.asarray(dictionary, dtype=np.float64)
    X = np.asarray(frames, dtype=np.float64)
    A = np.asarray(activations, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim != 2 or B.shape[0] != X.shape[0] or B.shape[1] != A.shape[0] or X.shape[1] != A.shape[1]:
        raise SolverError(
            f"dimension mismatch: dictionary {B.shape}, frames {X.shape}, activations {A.shape}"
        )
    R = X - B @ A
    return float(np.sum(R * R) + alpha * np.sum(np.abs(A)))


def kkt_residual(gram, corr, x, alpha) -> float:
    """Largest violation of the L1-LS optimality conditions at ``x``."""
    g = 2.0 * (gram @ x - corr)
    nz = x != 0
    r_nz = np.abs(g[nz] + alpha * np.sign(x[nz]))
    r_z = np.abs(g[~nz]) - alpha
    worst = 0.0
    if r_nz.size:
        worst = max(worst, float(r_nz.max()))
    if r_z.size:
        worst = max(worst, float(r_z.max()))
    return worst


@njit(cache=True)
def _fwd(L, a, b, out):
    for r in range(a):
        acc = b[r]
        for k in range(r):
            acc -= L[r, k] * out[k]
        out[r] = acc / L[r, r]


@njit(cache=True)
def _bwd(L, a, b, out):
    for r in range(a - 1, -1, -1):
        acc = b[r]
        for k in range(r + 1, a):
            acc -= L[k, r] * out[k]
        out[r] = acc / L[r, r]


@njit(cache=True)
def _rebuild(gram, act, a, L):
    # Cholesky of gram[act, act]; returns False if not positive definite
    for r in range(a):
        for col in range(r + 1):
            acc = gram[act[r], act[col]]
            for k in range(col):
                acc -= L[r, k] * L[col, k]
            if r == col:
                if acc <= 0.0:
                    return False
                L[r, r] = np.sqrt(acc)
            else:
                L[r, col] = acc / L[col, col]
    return True


@njit(cache=True)
def _obj_active(gram, c, yty, act, a, xa, alpha):
    q = yty
    for r in range(a):
        q -= 2.0 * c[act[r]] * xa[r]
        q += alpha * abs(xa[r])
        acc = 0.0
        for k in range(a):
            acc += gram[act[r], act[k]] * xa[k]
        q += xa[r] * acc
    return q


@njit(cache=True)
def _fss_kernel(gram, c, yty, alpha, eps, max_iter, x, act, L, grad, trace, wbuf):
    """Feature-sign search for one target. Returns (iterations, converged)."""
    S = c.shape[0]
    for j in range(S):
        x[j] = 0.0
        grad[j] = -2.0 * c[j]
    a = 0
    need_new = True
    it = 0
    nsteps = 0
    converged = False
    w1 = wbuf[0]
    w2 = wbuf[1]
    xa_old = wbuf[2]
    xa_new = wbuf[3]
    xt = wbuf[4]
    best = wbuf[5]
    theta = wbuf[6]
    while it < max_iter:
        it += 1
        if need_new:
            i = -1
            gmax = 0.0
            for j in range(S):
                if x[j] == 0.0 and theta[j] == 0.0:
                    v = abs(grad[j])
                    if v > gmax:
                        gmax = v
                        i = j
            if i < 0 or gmax <= alpha + eps:
                converged = True
                break
            th_i = -1.0 if grad[i] > 0 else 1.0
            d2 = gram[i, i]
            if a > 0:
                for r in range(a):
                    w2[r] = gram[act[r], i]
                _fwd(L, a, w2, w1)
                for r in range(a):
                    d2 -= w1[r] * w1[r]
            if d2 <= 1e-10 * gram[i, i]:
                # atom i is in the span of the active atoms; the objective is linear
                # along the null direction, walk until an old coefficient hits zero
                _bwd(L, a, w1, w2)
                kmin = -1
                tmin = np.inf
                for r in range(a):
                    dr = -w2[r] * th_i
                    xr = x[act[r]]
                    if xr * dr < 0.0:
                        tr = -xr / dr
                        if tr < tmin:
                            tmin = tr
                            kmin = r
                if kmin < 0:
                    break
                for r in range(a):
                    x[act[r]] += tmin * (-w2[r] * th_i)
                x[act[kmin]] = 0.0
                theta[act[kmin]] = 0.0
                act[kmin] = i
                x[i] = tmin * th_i
                theta[i] = th_i
                if not _rebuild(gram, act, a, L):
                    break
            else:
                theta[i] = th_i
                if a > 0:
                    for r in range(a):
                        L[a, r] = w1[r]
                L[a, a] = np.sqrt(d2)
                act[a] = i
                a += 1

                # feature-sign step on the active set
                for r in range(a):
                    xa_old[r] = x[act[r]]
                    w2[r] = c[act[r]] - 0.5 * alpha * theta[act[r]]
                _fwd(L, a, w2, w1)
                _bwd(L, a, w1, xa_new)
                consistent = True
                for r in range(a):
                    s = 1.0 if xa_new[r] > 0 else (-1.0 if xa_new[r] < 0 else 0.0)
                    if s != theta[act[r]]:
                        consistent = False
                for r in range(a):
                    best[r] = xa_new[r]
                if not consistent:
                    best_obj = _obj_active(gram, c, yty, act, a, xa_new, alpha)
                    for k in range(a):
                        if xa_old[k] == 0.0:
                            continue
                        dk = xa_new[k] - xa_old[k]
                        if dk == 0.0:
                            continue
                        tk = -xa_old[k] / dk
                        if tk <= 0.0 or tk >= 1.0:
                            continue
                        for r in range(a):
                            xt[r] = xa_old[r] + tk * (xa_new[r] - xa_old[r])
                        xt[k] = 0.0
                        o = _obj_active(gram, c, yty, act, a, xt, alpha)
                        if o < best_obj:
                            best_obj = o
                            for r in range(a):
                                best[r] = xt[r]
                bmax = 0.0
                for r in range(a):
                    if abs(best[r]) > bmax:
                        bmax = abs(best[r])
                thresh = 1e-15 * max(1.0, bmax)
                removed = False
                m = 0
                for r in range(a):
                    j = act[r]
                    if abs(best[r]) > thresh:
                        x[j] = best[r]
                        theta[j] = 1.0 if best[r] > 0 else -1.0
                        act[m] = j
                        m += 1
                    else:
                        x[j] = 0.0
                        theta[j] = 0.0
                        removed = True
                a = m
                if removed and a > 0:
                    if not _rebuild(gram, act, a, L):
                        break
        else:
            # repeat the feature-sign step without adding a coefficient
            for r in range(a):
                xa_old[r] = x[act[r]]
                w2[r] = c[act[r]] - 0.5 * alpha * theta[act[r]]
            _fwd(L, a, w2, w1)
            _bwd(L, a, w1, xa_new)
            consistent = True
            for r in range(a):
                s = 1.0 if xa_new[r] > 0 else (-1.0 if xa_new[r] < 0 else 0.0)
                if s != theta[act[r]]:
                    consistent = False
            for r in range(a):
                best[r] = xa_new[r]
            if not consistent:
                best_obj = _obj_active(gram, c, yty, act, a, xa_new, alpha)
                for k in range(a):
                    if xa_old[k] == 0.0:
                        continue
                    dk = xa_new[k] - xa_old[k]
                    if dk == 0.0:
                        continue
                    tk = -xa_old[k] / dk
                    if tk <= 0.0 or tk >= 1.0:
                        continue
                    for r in range(a):
                        xt[r] = xa_old[r] + tk * (xa_new[r] - xa_old[r])
                    xt[k] = 0.0
                    o = _obj_active(gram, c, yty, act, a, xt, alpha)
                    if o < best_obj:
                        best_obj = o
                        for r in range(a):
                            best[r] = xt[r]
            bmax = 0.0
            for r in range(a):
                if abs(best[r]) > bmax:
                    bmax = abs(best[r])
            thresh = 1e-15 * max(1.0, bmax)
            removed = False
            m = 0
            for r in range(a):
                j = act[r]
                if abs(best[r]) > thresh:
                    x[j] = best[r]
                    theta[j] = 1.0 if best[r] > 0 else -1.0
                    act[m] = j
                    m += 1
                else:
                    x[j] = 0.0
                    theta[j] = 0.0
                    removed = True
            a = m
            if removed and a > 0:
                if not _rebuild(gram, act, a, L):
                    break

        # gradient of the quadratic part and trace bookkeeping
        for j in range(S):
            acc = -c[j]
            for r in range(a):
                acc += gram[j, act[r]] * x[act[r]]
            grad[j] = 2.0 * acc
        for r in range(a):
            xt[r] = x[act[r]]
        trace[nsteps] = _obj_active(gram, c, yty, act, a, xt, alpha)
        nsteps += 1

        worst = 0.0
        for r in range(a):
            j = act[r]
            v = abs(grad[j] + alpha * theta[j])
            if v > worst:
                worst = v
        need_new = worst <= eps
    for j in range(S):
        theta[j] = 0.0
    return it, converged, nsteps


def _work(S):
    return (np.zeros(S, dtype=np.intp), np.zeros((S, S)), np.zeros(S),
            np.zeros(max(MAX_ITER_ACTIVATION, 1)), np.zeros((7, S)))


def feature_sign(gram, corr, yty, alpha, tol=TOL_KKT, max_iter=MAX_ITER_ACTIVATION, _work_buf=None):
    """Feature-sign search on precomputed ``gram = B^T B`` and ``corr = B^T x``.

    Returns ``(x, iterations, converged, trace)``.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    corr = np.ascontiguousarray(corr, dtype=np.float64)
    S = corr.shape[0]
    act, L, grad, trace, wbuf = _work_buf if _work_buf is not None else _work(S)
    if trace.shape[0] < max_iter:
        trace = np.zeros(max_iter)
    # internal stopping tolerance sits below the reported certificate tolerance
    eps = min(tol * 1e-2, 1e-9 * max(1.0, alpha))
    x = np.zeros(S)
    it, conv, nsteps = _fss_kernel(gram, corr, float(yty), float(alpha), eps, int(max_iter),
                           x, act, L, grad, trace, wbuf)
    return x, int(it), bool(conv), trace[:nsteps].tolist()


def solve_l1_ls(problem: SparseCodingProblem, tol=TOL_KKT, max_iter=MAX_ITER_ACTIVATION) -> SolverReport:
    """Minimise ``||x - B a||^2 + alpha ||a||_1`` for one target vector."""
    B, y, alpha = problem.dictionary, problem.target, problem.alpha
    gram = B.T @ B
    corr = B.T @ y
    x, it, conv, trace = feature_sign(gram, corr, float(y @ y), alpha, tol=tol, max_iter=max_iter)
    res = kkt_residual(gram, corr, x, alpha)
    if not conv or res > tol:
        conv = False
        log.warning("solve_l1_ls not converged after %d iterations (kkt residual %.3g)", it, res)
    return SolverReport(
        solution=x,
        objective=objective(B, y, x, alpha),
        iterations=it,
        kkt_residual=res,
        converged=conv,
        trace=trace,
    )


def solve_l1_ls_batch(dictionary, frames, alpha, tol=TOL_KKT, max_iter=MAX_ITER_ACTIVATION,
                      return_info=False):
    """Solve the activation problem for every column of ``frames`` (n x K).

    Shares the Gram matrix across frames. Returns the S x K activation matrix,
    plus ``(kkt_residuals, converged)`` arrays when ``return_info`` is set.
    """
    B = np.asarray(dictionary, dtype=np.float64)
    X = np.asarray(frames, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != B.shape[0]:
        raise SolverError(f"frame length {X.shape[0]} != dictionary rows {B.shape[0]}")
    if not np.all(np.isfinite(X)):
        col = int(np.flatnonzero(~np.all(np.isfinite(X), axis=0))[0])
        raise SolverError(f"frame {col} contains non-finite values")
    if not (alpha > 0):
        raise SolverError(f"alpha must be positive, got {alpha}")
    gram = B.T @ B
    C = B.T @ X
    yty = np.einsum("ij,ij->j", X, X)
    K = X.shape[1]
    A = np.zeros((B.shape[1], K))
    res = np.zeros(K)
    conv = np.ones(K, dtype=bool)
    buf = _work(B.shape[1])
    for k in range(K):
        x, it, ok, _ = feature_sign(gram, C[:, k], yty[k], alpha, tol=tol, max_iter=max_iter, _work_buf=buf)
        A[:, k] = x
        res[k] = kkt_residual(gram, C[:, k], x, alpha)
        conv[k] = ok and res[k] <= tol
    if not conv.all():
        log.warning("%d of %d activation solves did not converge", int((~conv).sum()), K)
    if return_info:
        return A, res, conv
    return A


def _dual_parts(AAt, C, lam, ridge):
    M = AAt + np.diag(lam + ridge)
    Minv = np.linalg.inv(M)
    Bt = Minv @ C  # S x n, rows are basis vectors
    return Minv, Bt


def _project_rows(Bt):
    norms = np.linalg.norm(Bt, axis=1)
    over = norms > 1.0
    Bt = Bt.copy()
    Bt[over] /= norms[over, None]
    return Bt


def _primal_pg(AAt, C, Bt, max_iter, tol):
    """Accelerated projected gradient on the primal, rows of ``Bt`` are basis vectors.

    Minimises ``sum(Bt * (AAt @ Bt)) - 2 sum(Bt * C)`` over rows of norm <= 1.
    Momentum restarts whenever the objective would rise, so the iterates never
    do worse than the starting point. Returns ``(Bt, iterations, converged)``.
    """
    L = 2.0 * float(np.linalg.eigvalsh(AAt)[-1])
    if L <= 0:
        return Bt, 0, True

    def f(Z):
        return float(np.sum(Z * (AAt @ Z)) - 2.0 * np.sum(Z * C))

    scale = max(1.0, float(np.abs(C).max()))
    Y, t = Bt.copy(), 1.0
    fx = f(Bt)
    for it in range(1, max_iter + 1):
        nxt = _project_rows(Y - (2.0 * (AAt @ Y - C)) / L)
        fn = f(nxt)
        if fn > fx:
            # restart from the last accepted point with a plain gradient step
            Y, t = Bt, 1.0
            nxt = _project_rows(Bt - (2.0 * (AAt @ Bt - C)) / L)
            fn = f(nxt)
        step = float(np.abs(nxt - Bt).max())
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = nxt + ((t - 1.0) / t_next) * (nxt - Bt)
        stalled = fx - fn <= 1e-15 * max(1.0, abs(fx))
        Bt, fx, t = nxt, min(fn, fx), t_next
        if L * step <= tol * scale or (stalled and L * step <= 1e-6 * scale):
            return Bt, it, True
    return Bt, max_iter, False


def update_basis(batch, activations, warm_start, max_iter=MAX_ITER_BASIS, tol=1e-12) -> BasisReport:
    """Norm-constrained least-squares basis update.

    Solved through the Lagrange dual by projected Newton. When the activation
    Gram matrix is singular, or Newton fails to certify, the primal is solved
    by accelerated projected gradient from the better of the warm start and
    the Newton iterate. ``batch`` is n x K, ``activations`` S x K,
    ``warm_start`` n x S. Columns with an all-zero activation row are copied
    from ``warm_start`` untouched.
    """
    X = np.asarray(batch, dtype=np.float64)
    A = np.asarray(activations, dtype=np.float64)
    B0 = np.asarray(warm_start, dtype=np.float64)
    if X.ndim != 2 or A.ndim != 2 or B0.ndim != 2:
        raise SolverError("batch, activations and warm_start must be 2-d")
    n, K = X.shape
    S = A.shape[0]
    if K < 1 or A.shape[1] != K or B0.shape != (n, S):
        raise SolverError(f"shape mismatch: batch {X.shape}, activations {A.shape}, warm_start {B0.shape}")
    for name, arr in (("batch", X), ("activations", A), ("warm_start", B0)):
        if not np.all(np.isfinite(arr)):
            raise SolverError(f"{name} contains non-finite values")

    B = B0.copy()
    used = np.flatnonzero(np.any(A != 0, axis=1))
    if used.size == 0:
        return BasisReport(basis=B, dual=np.zeros(S), iterations=0)
    Au = A[used]
    AAt = Au @ Au.T
    C = Au @ X.T  # s x n
    s = used.size

    scale = max(float(np.trace(AAt)) / s, 1e-300)
    rank_def = np.linalg.matrix_rank(AAt, tol=1e-12 * scale * s) < s

    lam = np.zeros(s)
    it = 0
    converged = False
    Bt = None

    def dual_value(lam_):
        Minv_, Bt_ = _dual_parts(AAt, C, lam_, 0.0)
        return -np.sum(C * Bt_) - lam_.sum(), Minv_, Bt_

    def proj_grad(lam_, Bt_):
        g_ = np.einsum("ij,ij->i", Bt_, Bt_) - 1.0  # dual gradient: squared column norm minus one
        # lam_i > 0 needs g_i = 0; lam_i = 0 needs g_i <= 0
        return g_, np.where(lam_ > 0, g_, np.maximum(g_, 0.0))

    if not rank_def:
        D, Minv, Bt = dual_value(lam)
        g, pg = proj_grad(lam, Bt)
        while it < max_iter:
            pg_norm = np.max(np.abs(pg))
            if pg_norm <= tol:
                converged = True
                break
            it += 1
            free = (lam > 0) | (g > 0)
            H = -2.0 * (Bt @ Bt.T) * Minv
            d = np.zeros(s)
            try:
                d[free] = -np.linalg.solve(H[np.ix_(free, free)], g[free])
            except np.linalg.LinAlgError:
                d[free] = g[free]
            if g[free] @ d[free] <= 0:
                d = np.where(free, g, 0.0)
            step = 1.0
            accepted = False
            slack = 1e-13 * max(1.0, abs(D))
            for _ in range(60):
                lam_try = np.maximum(lam + step * d, 0.0)
                D_try, Minv_t, Bt_t = dual_value(lam_try)
                g_t, pg_t = proj_grad(lam_try, Bt_t)
                # near the optimum the dual value is flat to rounding; fall back on the gradient
                if D_try >= D + 1e-4 * (g @ (lam_try - lam)) - slack or np.max(np.abs(pg_t)) < 0.5 * pg_norm:
                    accepted = True
                    break
                step *= 0.5
            if not accepted or np.array_equal(lam_try, lam):
                converged = pg_norm <= 1e-9
                break
            # below 1e-9 the gradient is at the rounding floor of large multipliers; stop once it stops shrinking
            if pg_norm <= 1e-9 and np.max(np.abs(pg_t)) >= pg_norm:
                converged = True
                break
            lam, D, Minv, Bt, g, pg = lam_try, D_try, Minv_t, Bt_t, g_t, pg_t
            if it >= _NEWTON_CAP:
                break

    if converged:
        Bt = _project_rows(Bt)
    else:
        start = B0[:, used].T.copy()
        if Bt is not None:
            cand = _project_rows(Bt)
            f = lambda Z: float(np.sum(Z * (AAt @ Z)) - 2.0 * np.sum(Z * C))  # noqa: E731
            if f(cand) < f(start):
                start = cand
        Bt, pg_it, converged = _primal_pg(AAt, C, start, min(max_iter, _PG_CAP), 1e-10)
        it += pg_it
        lam = np.zeros(s)
        if not converged:
            # a singular Gram matrix has a continuum of minimisers; the update is still a descent step
            (log.info if rank_def else log.warning)("basis update did not reach tolerance after %d iterations", it)
    B[:, used] = Bt.T
    dual = np.zeros(S)
    dual[used] = lam
    if rank_def:
        log.info("rank-deficient A A^T in basis update (%d used atoms); solved in the primal", s)
    return BasisReport(basis=B, dual=dual, iterations=it, rank_deficient=bool(rank_def), converged=converged)
