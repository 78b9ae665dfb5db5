"""Relevance-vector solvers.

A relevance vector nu expresses the target head as a mixture of source
heads, W @ nu = w. Three routes are provided: the exact minimum-L1 solution
(linear program, vertex solution, support at most rank(W)), the minimum-L2
solution (pseudoinverse), and an L1-regularized least-squares estimate
(Lasso) for the realistic case where W and w are themselves estimates.
"""

import dataclasses
import math

import numpy as np
import scipy.linalg

from . import simplex

_RANK_RTOL = 1e-10


@dataclasses.dataclass(frozen=True)
class RelevanceVector:
    """A solved relevance vector plus solver diagnostics."""

    nu: np.ndarray
    solver: str
    lam: float | None
    kkt_residual: float | None
    support_size: int
    residual_l2: float

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float)
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)


def support_size(nu, tol=None):
    """Number of entries of nu above the dead-band tolerance."""
    nu = np.asarray(nu, dtype=float)
    if tol is None:
        tol = 1e-9 * (1.0 + (np.max(np.abs(nu)) if nu.size else 0.0))
    return int(np.sum(np.abs(nu) > tol))


def _check_diverse(W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("W must be a k x T matrix")
    svals = scipy.linalg.svdvals(W)
    if svals.size == 0 or svals[-1] <= _RANK_RTOL * max(1.0, svals[0]):
        raise ValueError(
            "source heads are not diverse: W is rank-deficient, so the "
            "relevance system W @ nu = w is not solvable for generic targets"
        )
    return W


def min_l2_solution(W, w):
    """Minimum-L2-norm solution of W @ nu = w (requires full row rank)."""
    W = _check_diverse(W)
    w = np.asarray(w, dtype=float)
    return np.linalg.lstsq(W, w, rcond=None)[0]


def l1_oracle_lp(W, w):
    """Exact minimum-L1-norm solution of W @ nu = w.

    Solved as a split-variable linear program; the simplex returns a vertex
    of the feasible polytope, so the support size never exceeds rank(W) = k.
    """
    W = _check_diverse(W)
    w = np.asarray(w, dtype=float)
    k, T = W.shape
    A = np.hstack([W, -W])
    try:
        res = simplex.solve_lp(np.ones(2 * T), A, w)
    except simplex.InfeasibleError as exc:
        raise ValueError(f"W @ nu = w has no solution: {exc}") from exc
    return res.x[:T] - res.x[T:]


def _cd_sweeps(W, w, nu, r, norms2, lam, tol, max_sweeps, objective,
               indices=None):
    """Cyclic coordinate-descent sweeps at a fixed lam; mutates nu and r.
    Sweeps the given coordinate subset (all coordinates by default).
    Returns (sweeps_used, stationary)."""
    if indices is None:
        indices = range(nu.size)
    for sweep in range(1, max_sweeps + 1):
        delta_max = 0.0
        for j in indices:
            nj = norms2[j]
            if nj == 0.0:
                continue
            old = nu[j]
            rho = W[:, j] @ r + nj * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / nj
            if new != old:
                r += W[:, j] * (old - new)
                nu[j] = new
                delta_max = max(delta_max, abs(new - old))
        if objective is not None:
            objective.append(0.5 * float(r @ r) + lam * float(np.sum(np.abs(nu))))
        if sweep % 64 == 0:
            r[:] = w - W @ nu  # shed accumulated drift in the running residual
        if delta_max <= tol * (1.0 + np.max(np.abs(nu), initial=0.0)):
            return sweep, True
    return max_sweeps, False


def lasso(W, w, lam, tol=1e-12, max_iters=100000, record_objective=False,
          kkt_tol=None):
    """L1-regularized least squares: min_nu 0.5||w - W nu||^2 + lam ||nu||_1.

    Cyclic coordinate descent with exact soft-threshold updates from a zero
    start, sweeping coordinates in index order; the returned vector is the
    fixed point of that scheme, which also pins down a deterministic answer
    when the minimizer is not unique. Zero-norm columns keep nu_t = 0.

    For lam far below ||W^T w||_inf, plain CD creeps along null(W) in
    O(lam)-sized steps and would never reach the minimizer; the solve then
    runs over a geometric lam path (factor 1/2) with warm starts, which is
    still deterministic, and finishes at the target lam under a
    fresh-residual KKT stop.  If full-coordinate sweeps stall above the KKT
    tolerance, a support-restricted polish takes over: CD over the current
    active set (strongly convex once the support has <= k columns of a
    generic W) with one coordinate freed per round, picked by largest KKT
    violation.

    Returns (nu, info); info carries sweeps, converged, degenerate, and the
    per-sweep objective values when record_objective is set.
    """
    W = np.asarray(W, dtype=float)
    w = np.asarray(w, dtype=float)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if W.ndim != 2 or w.shape != (W.shape[0],):
        raise ValueError("need W of shape (k, T) and w of shape (k,)")
    k, T = W.shape
    norms2 = np.einsum("ij,ij->j", W, W)
    lam_max = float(np.max(np.abs(W.T @ w), initial=0.0))
    if kkt_tol is None:
        kkt_tol = 1e-11 * (1.0 + lam_max)
    nu = np.zeros(T)
    r = w.copy()
    objective = [] if record_objective else None

    stages = []
    if lam_max > 0.0 and lam < 1e-3 * lam_max:
        level = 0.5 * lam_max
        floor = max(lam, 1e-16 * lam_max)
        while level > floor:
            stages.append(level)
            level *= 0.5
    stages.append(lam)

    total = 0
    converged = False
    for stage_lam in stages[:-1]:
        used, _ = _cd_sweeps(W, w, nu, r, norms2, stage_lam,
                             max(tol, 1e-10), min(1000, max_iters - total),
                             objective)
        total += used
        if total >= max_iters:
            break
    prev_kkt = math.inf
    while total < max_iters:
        used, stationary = _cd_sweeps(W, w, nu, r, norms2, lam, tol,
                                      min(64, max_iters - total), objective)
        total += used
        r[:] = w - W @ nu
        res = kkt_residual(W, w, nu, lam)
        if res <= kkt_tol:
            converged = True
            break
        if stationary and res >= 0.999 * prev_kkt:
            break  # fixed point for this lam; no measurable progress left
        prev_kkt = res
    converged = False  # re-proved below; an oversized support can hide a
    # near-flat valley that the KKT residual alone cannot resolve
    for _ in range(4 * T + 16):
        if total >= max_iters:
            break
        r[:] = w - W @ nu
        support = [j for j in range(T) if nu[j] != 0.0 and norms2[j] > 0.0]
        if len(support) > k:
            support = _reduce_support(W, nu, support)
            r[:] = w - W @ nu
        res = kkt_residual(W, w, nu, lam)
        if res <= kkt_tol:
            converged = True
            break
        improved = False
        if support:
            cand = nu.copy()
            if _exact_on_support(W, w, cand, lam, support):
                cres = kkt_residual(W, w, cand, lam)
                rc = w - W @ cand
                obj_cand = 0.5 * float(rc @ rc) + lam * float(np.abs(cand).sum())
                obj_cur = 0.5 * float(r @ r) + lam * float(np.abs(nu).sum())
                if cres < res and obj_cand <= obj_cur + 1e-15 * (1.0 + obj_cur):
                    nu[:] = cand
                    r[:] = rc
                    res = cres
                    improved = True
            if not improved:
                used, _ = _cd_sweeps(W, w, nu, r, norms2, lam, 1e-15,
                                     min(200, max_iters - total),
                                     objective, support)
                total += used
                r[:] = w - W @ nu
                res = kkt_residual(W, w, nu, lam)
            if res <= kkt_tol:
                converged = True
                break
        g = W.T @ r
        best, best_v = -1, 0.0
        for j in range(T):
            if nu[j] == 0.0 and norms2[j] > 0.0:
                v = abs(g[j]) - lam
                if v > best_v:
                    best, best_v = j, v
        if best >= 0:
            nu[best] = math.copysign(best_v, g[best]) / norms2[best]
            r -= W[:, best] * nu[best]
        elif not improved:
            break  # violation sits on the active set and nothing moved
    info = {
        "sweeps": total,
        "converged": converged,
        "degenerate": bool(lam == 0.0 and min(k, T) < T),
    }
    if record_objective:
        info["objective"] = objective
    return nu, info


def _reduce_support(W, nu, support):
    """Walk flat directions of a rank-deficient active set to a vertex.

    Moving along null(W_S) keeps the residual fixed; the L1 term changes
    linearly, so walking the non-increasing direction until a coordinate
    hits zero never increases the objective. Mutates nu; returns the
    (possibly shrunk) support list."""
    S = list(support)
    while len(S) > 1:
        WS = W[:, S]
        _, sig, Vt = np.linalg.svd(WS, full_matrices=True)
        rank = int(np.sum(sig > 1e-10 * max(sig[0], 1e-300)))
        if rank >= len(S):
            break
        u = Vt[-1]
        signs = np.sign(nu[S])
        if signs @ u > 0.0:
            u = -u
        shrink = u * signs < 0.0
        if not shrink.any():
            u = -u
            shrink = u * signs < 0.0
            if not shrink.any():
                break
        steps = -nu[S][shrink] / u[shrink]
        t = float(np.min(steps))
        vals = nu[S] + t * u
        vals[np.abs(vals) <= 1e-12 * np.max(np.abs(vals), initial=0.0)] = 0.0
        nu[S] = vals
        S = [j for j in S if nu[j] != 0.0]
    return S


def _exact_on_support(W, w, nu, lam, support):
    """Solve the fixed-sign stationarity system restricted to the support,
    dropping sign-flipped coordinates until the solution is consistent.
    Mutates nu and returns True on success, False to fall back to CD."""
    S = list(support)
    s = np.sign(nu[S])
    for _ in range(len(S) + 1):
        if not S:
            return False
        WS = W[:, S]
        try:
            sol = np.linalg.solve(WS.T @ WS, WS.T @ w - lam * s)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(sol)):
            return False
        keep = sol * s > 0.0
        if keep.all():
            nu[:] = 0.0
            nu[S] = sol
            return True
        S = [j for j, ok in zip(S, keep) if ok]
        s = s[keep]
    return False


def kkt_residual(W, w, nu, lam):
    """Max violation of the Lasso stationarity conditions at nu.

    For active coordinates the gradient of the smooth part must equal
    lam * sign(nu_t); for zero coordinates it must lie in [-lam, lam].
    Zero at any exact minimizer.
    """
    W = np.asarray(W, dtype=float)
    w = np.asarray(w, dtype=float)
    nu = np.asarray(nu, dtype=float)
    g = W.T @ (w - W @ nu)
    res = 0.0
    for j in range(nu.size):
        if nu[j] != 0.0:
            res = max(res, abs(g[j] - lam * math.copysign(1.0, nu[j])))
        else:
            res = max(res, max(0.0, abs(g[j]) - lam))
    return float(res)


def lambda_rule(k, R, C_W, sigma_min):
    """Conservative regularization level from the problem constants.

    k is the latent dimension, R bounds the target-head norm, C_W bounds
    the source-head norms, sigma_min lower-bounds the singular values of W.
    Deliberately pessimistic; the lazy default used by the pipelines is a
    near-zero lam instead.
    """
    if min(k, R, C_W, sigma_min) <= 0:
        raise ValueError("all rule inputs must be positive")
    gamma = max(2160.0 * k ** 1.5 * C_W ** 2 / sigma_min,
                math.sqrt(2160.0 * k ** 1.5 * C_W ** 3 / sigma_min))
    return 45.0 * (math.sqrt(k) * R * C_W * sigma_min / gamma) * max(1.0, C_W / gamma)


LAZY_LAMBDA = 1e-10


def solve_relevance(W, w, method="lasso", lam=LAZY_LAMBDA):
    """One-stop solver returning a RelevanceVector with diagnostics."""
    W = np.asarray(W, dtype=float)
    w = np.asarray(w, dtype=float)
    if method == "lasso":
        nu, _ = lasso(W, w, lam)
        kkt = kkt_residual(W, w, nu, lam)
        used_lam = lam
    elif method == "min_l2":
        nu = min_l2_solution(W, w)
        kkt, used_lam = None, None
    elif method == "lp":
        nu = l1_oracle_lp(W, w)
        kkt, used_lam = None, None
    else:
        raise ValueError(f"unknown method {method!r}")
    return RelevanceVector(
        nu=nu, solver=method, lam=used_lam, kkt_residual=kkt,
        support_size=support_size(nu),
        residual_l2=float(np.linalg.norm(W @ nu - w)),
    )


@dataclasses.dataclass(frozen=True)
class NormBoundReport:
    l1_norm: float
    l1_bound: float
    l1_ok: bool
    l2_norm: float
    l2_bound: float
    l2_ok: bool
    sigma_min: float


def norm_bound_check(W, w, nu1=None, nu2=None, rtol=1e-9):
    """Check the solver outputs against their closed-form norm ceilings:
    ||nu1||_1 <= sqrt(k) ||w|| / sigma_min(W) and
    ||nu2||_2 <= ||w|| / sigma_min(W)."""
    W = _check_diverse(W)
    w = np.asarray(w, dtype=float)
    k = W.shape[0]
    sigma_min = float(scipy.linalg.svdvals(W)[-1])
    if nu1 is None:
        nu1 = l1_oracle_lp(W, w)
    if nu2 is None:
        nu2 = min_l2_solution(W, w)
    wn = float(np.linalg.norm(w))
    l1_norm = float(np.linalg.norm(nu1, 1))
    l2_norm = float(np.linalg.norm(nu2))
    l1_bound = math.sqrt(k) * wn / sigma_min
    l2_bound = wn / sigma_min
    return NormBoundReport(
        l1_norm=l1_norm, l1_bound=l1_bound,
        l1_ok=bool(l1_norm <= l1_bound * (1.0 + rtol)),
        l2_norm=l2_norm, l2_bound=l2_bound,
        l2_ok=bool(l2_norm <= l2_bound * (1.0 + rtol)),
        sigma_min=sigma_min,
    )


def re_condition_diagnostic(W, support, alpha=3.0, n_samples=2000, seed=0):
    """Sampled lower estimate of the restricted eigenvalue of W over the cone
    {delta : ||delta_off_support||_1 <= alpha * ||delta_on_support||_1}.

    A Monte Carlo diagnostic, not a certificate: it reports the smallest
    ||W delta||^2 / ||delta||^2 seen over sampled cone directions.
    """
    W = np.asarray(W, dtype=float)
    T = W.shape[1]
    support = np.asarray(sorted(set(int(s) for s in support)), dtype=int)
    if support.size == 0 or np.any(support < 0) or np.any(support >= T):
        raise ValueError("support must be a nonempty subset of 0..T-1")
    off = np.setdiff1d(np.arange(T), support)
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(n_samples):
        delta = np.zeros(T)
        ds = rng.standard_normal(support.size)
        delta[support] = ds
        if off.size:
            g = rng.standard_normal(off.size)
            l1_cap = alpha * np.sum(np.abs(ds)) * rng.uniform()
            g_l1 = np.sum(np.abs(g))
            if g_l1 > 0:
                delta[off] = g * (l1_cap / g_l1)
        denom = delta @ delta
        if denom == 0.0:
            continue
        Wd = W @ delta
        best = min(best, float(Wd @ Wd / denom))
    return best
