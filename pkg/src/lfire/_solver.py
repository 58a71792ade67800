"""Penalized-logistic path solver (numba kernel).

Minimizes, for each lambda on a descending path,

    (1/n) [ sum_theta log(1 + nu exp(-h)) + sum_marg log(1 + exp(h)/nu) ]
        + lambda * sum_{penalized j} |beta_j|,     h = X beta,

by iteratively reweighted quadratic approximation solved with cyclic
coordinate descent and soft-thresholding, warm-started along the path.
Convergence per lambda requires a full coordinate sweep that moves no
coefficient by tol or more.

Plain cyclic descent alone crawls on these problems: the quadratic
expansions of clustered summaries are near-collinear (pairwise
correlations beyond 0.999) and far-from-truth grid nodes are nearly
separable, which makes the sweep-to-sweep contraction factor approach 1
(measured: ~10^3 sweeps per lambda, hours per posterior grid). Three
standard accelerations recover glmnet-class speed while leaving the
minimizer unchanged (the convergence arbiter is still the plain sweep):

* sequential strong rules restrict sweeps to coordinates whose gradient
  at the previous solution can become active, with a full KKT-verifying
  sweep before any lambda is accepted;
* quasi-Newton jumps on the active set solve the quadratic subproblem
  directly via Cholesky on a cached Gram matrix (rebuilt only when the
  IRLS weights drift), with sign-crossing projection so the L1 geometry
  is respected; trust-region clamps keep steps bounded near separation;
* a backtracking line search on the true penalized loss makes the outer
  iteration globally convergent (proximal Newton with damping).
"""
import numpy as np
from numba import njit

MAX_SET = 512          # Gram cache capacity; larger active sets fall back to sweeps
PROB_CLIP = 1e-10      # probability clamp in the IRLS weights
COORD_CAP = 5.0        # per-update coefficient travel bound (standardized scale)
JUMP_CAP = 20.0        # sup-norm bound on one quasi-Newton step


@njit(cache=True, fastmath=True)
def _sigmoid_clip(t):
    if t > 35.0:
        return 1.0 - PROB_CLIP
    if t < -35.0:
        return PROB_CLIP
    s = 1.0 / (1.0 + np.exp(-t))
    if s < PROB_CLIP:
        return PROB_CLIP
    if s > 1.0 - PROB_CLIP:
        return 1.0 - PROB_CLIP
    return s


@njit(cache=True, fastmath=True)
def _pen_loss(XT, y, log_nu, pen, lam, beta, h):
    n = XT.shape[1]
    acc = 0.0
    for i in range(n):
        t = h[i] - log_nu
        if y[i] == 1.0:
            t = -t
        if t > 35.0:
            acc += t
        elif t > -35.0:
            acc += np.log1p(np.exp(t))
    loss = acc / n
    for j in range(pen.shape[0]):
        if pen[j]:
            loss += lam * abs(beta[j])
    return loss


@njit(cache=True, fastmath=True)
def _update_coord(XT, beta, m, w, v, pen, lam, j):
    n = XT.shape[1]
    acc = 0.0
    for i in range(n):
        acc += m[i] * XT[j, i]
    num = acc + v[j] * beta[j]
    if pen[j]:
        if num > lam:
            bj = (num - lam) / v[j]
        elif num < -lam:
            bj = (num + lam) / v[j]
        else:
            bj = 0.0
    else:
        bj = num / v[j]
    d = bj - beta[j]
    if d > COORD_CAP:
        d = COORD_CAP
        bj = beta[j] + d
    elif d < -COORD_CAP:
        d = -COORD_CAP
        bj = beta[j] + d
    if d != 0.0:
        beta[j] = bj
        for i in range(n):
            m[i] -= d * w[i] * XT[j, i]
    return abs(d)


@njit(cache=True, fastmath=True)
def _sweep_set(XT, beta, m, w, v, pen, lam, idx, nidx):
    delta_max = 0.0
    for a in range(nidx):
        j = idx[a]
        if v[j] <= 0.0:
            continue
        d = _update_coord(XT, beta, m, w, v, pen, lam, j)
        if d > delta_max:
            delta_max = d
    return delta_max


@njit(cache=True, fastmath=True)
def _sweep_full(XT, beta, m, w, v, pen, lam):
    p = XT.shape[0]
    delta_max = 0.0
    for j in range(p):
        if v[j] <= 0.0:
            continue
        d = _update_coord(XT, beta, m, w, v, pen, lam, j)
        if d > delta_max:
            delta_max = d
    return delta_max


@njit(cache=True, fastmath=True)
def _gram_accumulate(XT, wb, gset, ng, start, Gc):
    """Fill Gram rows [start, ng) of X_gset^T diag(wb) X_gset."""
    n = XT.shape[1]
    for a in range(start, ng):
        ja = gset[a]
        for b in range(a + 1):
            jb = gset[b]
            g = 0.0
            for i in range(n):
                g += wb[i] * XT[ja, i] * XT[jb, i]
            Gc[a, b] = g
            Gc[b, a] = g


@njit(cache=True, fastmath=True)
def _jump(XT, beta, m, w, pen, lam, act, na, pos, Gc, L, rhs, bsol, alive):
    """Sign-projected Newton step on the active set from the cached Gram.

    Solves G d = <x, m> - lam sign(beta) on the alive coordinates with a
    pivot-skipping Cholesky (numerically dependent columns simply do not
    move this round), scales into a sup-norm trust region, and steps to
    the first sign crossing, zeroing that coordinate exactly and dropping
    it. At most four drop rounds per call; sweeps resume afterwards.
    """
    n = XT.shape[1]
    for a in range(na):
        alive[a] = 1
    for a in range(na):
        ja = act[a]
        acc = 0.0
        for i in range(n):
            acc += m[i] * XT[ja, i]
        if pen[ja]:
            if beta[ja] > 0.0:
                acc -= lam
            elif beta[ja] < 0.0:
                acc += lam
        rhs[a] = acc
    for _round in range(4):
        dmax = 0.0
        k = 0
        for a in range(na):
            if alive[a] == 1:
                g = Gc[pos[a], pos[a]]
                if g > dmax:
                    dmax = g
                k += 1
        if k == 0 or dmax <= 0.0:
            return
        floor = dmax * 1e-13
        kk = 0
        for a in range(na):
            if alive[a] != 1:
                continue
            ll = 0
            for b in range(na):
                if alive[b] != 1:
                    continue
                if ll > kk:
                    break
                ssum = Gc[pos[a], pos[b]]
                for q in range(ll):
                    ssum -= L[kk, q] * L[ll, q]
                if ll == kk:
                    if ssum <= floor:
                        alive[a] = 2
                        kk -= 1
                        break
                    L[kk, kk] = np.sqrt(ssum)
                else:
                    L[kk, ll] = ssum / L[ll, ll]
                ll += 1
            kk += 1
        k = 0
        for a in range(na):
            if alive[a] == 1:
                ssum = rhs[a]
                for q in range(k):
                    ssum -= L[k, q] * bsol[q]
                bsol[k] = ssum / L[k, k]
                k += 1
        for kk in range(k - 1, -1, -1):
            ssum = bsol[kk]
            for q in range(kk + 1, k):
                ssum -= L[q, kk] * bsol[q]
            bsol[kk] = ssum / L[kk, kk]
        smax = 0.0
        for q in range(k):
            aq = abs(bsol[q])
            if aq > smax:
                smax = aq
        if smax > JUMP_CAP:
            sc = JUMP_CAP / smax
            for q in range(k):
                bsol[q] *= sc
        t = 1.0
        cross = -1
        kk = 0
        for a in range(na):
            if alive[a] != 1:
                continue
            ja = act[a]
            if pen[ja] and beta[ja] != 0.0:
                tgt = beta[ja] + bsol[kk]
                if tgt * beta[ja] < 0.0:
                    ta = beta[ja] / (beta[ja] - tgt)
                    if ta < t:
                        t = ta
                        cross = a
            kk += 1
        kk = 0
        for a in range(na):
            if alive[a] != 1:
                continue
            ja = act[a]
            if a == cross:
                d = -beta[ja]
            else:
                d = t * bsol[kk]
            if d != 0.0:
                beta[ja] += d
                for i in range(n):
                    m[i] -= d * w[i] * XT[ja, i]
                for b in range(na):
                    rhs[b] -= d * Gc[pos[b], pos[a]]
            kk += 1
        if cross < 0:
            return
        alive[cross] = 0
        for a in range(na):
            if alive[a] == 2:
                alive[a] = 1


@njit(cache=True, fastmath=True)
def cd_path(XT, y, log_nu, pen, lams, tol, max_sweeps):
    """Solve the penalized path.

    Parameters: XT (p, n) standardized features, row-major by feature;
    y in {0., 1.}; log_nu = log(n_marginal / n_theta); pen marks penalized
    coordinates; lams descending. Returns (betas (n_lam, p), sweeps,
    status) with status 0 on success, else the 1-based index of the
    lambda that failed to converge within the sweep budget.
    """
    p, n = XT.shape
    n_lam = lams.shape[0]
    beta = np.zeros(p)
    h = np.zeros(n)
    betas = np.zeros((n_lam, p))
    w = np.empty(n)
    m = np.empty(n)
    v = np.empty(p)
    grad = np.empty(p)
    strong = np.empty(p, dtype=np.int64)
    act = np.empty(p, dtype=np.int64)
    beta_start = np.empty(p)
    h_start = np.empty(n)
    gset = np.empty(MAX_SET, dtype=np.int64)
    in_gset = np.full(p, -1, dtype=np.int64)
    ng = 0
    wb = np.zeros(n)
    Gc = np.empty((MAX_SET, MAX_SET))
    L = np.empty((MAX_SET, MAX_SET))
    rhs = np.empty(MAX_SET)
    bsol = np.empty(MAX_SET)
    alive = np.empty(MAX_SET, dtype=np.int64)
    pos = np.empty(p, dtype=np.int64)
    sweeps = 0
    lam_prev = lams[0]
    pbar = 0.0
    for i in range(n):
        pbar += y[i]
    pbar /= n
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += (y[i] - pbar) * XT[j, i]
        grad[j] = acc / n
    for li in range(n_lam):
        lam = lams[li]
        thr = 2.0 * lam - lam_prev
        ns = 0
        for j in range(p):
            if not pen[j] or beta[j] != 0.0 or abs(grad[j]) >= thr:
                strong[ns] = j
                ns += 1
        converged = False
        loss_cur = _pen_loss(XT, y, log_nu, pen, lam, beta, h)
        for outer in range(100):
            for j in range(p):
                beta_start[j] = beta[j]
            for i in range(n):
                h_start[i] = h[i]
            wdrift = 0.0
            wsum = 0.0
            for i in range(n):
                si = _sigmoid_clip(h[i] - log_nu)
                w[i] = si * (1.0 - si) / n
                m[i] = (y[i] - si) / n
                d = w[i] - wb[i]
                wdrift += abs(d)
                wsum += w[i]
            for j in range(p):
                acc = 0.0
                for i in range(n):
                    acc += w[i] * XT[j, i] * XT[j, i]
                v[j] = acc
            stale = wdrift > 0.2 * wsum
            phase_delta = 0.0
            inner_ok = False
            stall = 0
            for _it in range(100000):
                d1 = _sweep_set(XT, beta, m, w, v, pen, lam, strong, ns)
                sweeps += 1
                if d1 > phase_delta:
                    phase_delta = d1
                if sweeps > max_sweeps:
                    return betas, sweeps, li + 1
                if d1 < tol:
                    d2 = _sweep_full(XT, beta, m, w, v, pen, lam)
                    sweeps += 1
                    if d2 > phase_delta:
                        phase_delta = d2
                    if d2 < tol:
                        inner_ok = True
                        break
                    ns = 0
                    for j in range(p):
                        if not pen[j] or beta[j] != 0.0 or abs(grad[j]) >= thr:
                            strong[ns] = j
                            ns += 1
                    continue
                na = 0
                overflow = False
                for j in range(p):
                    if (beta[j] != 0.0 or not pen[j]) and v[j] > 0.0:
                        if na < MAX_SET:
                            act[na] = j
                            na += 1
                        else:
                            overflow = True
                            break
                stall += 1
                if na == 0 or overflow:
                    continue
                if stall > 16 or (stale and stall > 2):
                    for a in range(ng):
                        in_gset[gset[a]] = -1
                    for a in range(na):
                        gset[a] = act[a]
                        in_gset[act[a]] = a
                    ng = na
                    for i in range(n):
                        wb[i] = w[i]
                    _gram_accumulate(XT, wb, gset, ng, 0, Gc)
                    stale = False
                    stall = 0
                else:
                    start = ng
                    for a in range(na):
                        j = act[a]
                        if in_gset[j] == -1 and ng < MAX_SET:
                            gset[ng] = j
                            in_gset[j] = ng
                            ng += 1
                    if ng > start:
                        if start == 0:
                            for i in range(n):
                                wb[i] = w[i]
                            stale = False
                        _gram_accumulate(XT, wb, gset, ng, start, Gc)
                ok = True
                for a in range(na):
                    pa = in_gset[act[a]]
                    if pa < 0:
                        ok = False
                        break
                    pos[a] = pa
                if ok:
                    _jump(XT, beta, m, w, pen, lam, act, na, pos, Gc, L,
                          rhs, bsol, alive)
            if not inner_ok:
                return betas, sweeps, li + 1
            for i in range(n):
                h[i] = 0.0
            for j in range(p):
                bj = beta[j]
                if bj != 0.0:
                    for i in range(n):
                        h[i] += bj * XT[j, i]
            loss_new = _pen_loss(XT, y, log_nu, pen, lam, beta, h)
            if loss_new > loss_cur + 1e-12 * (1.0 + abs(loss_cur)):
                accepted = False
                for _bt in range(40):
                    for j in range(p):
                        beta[j] = 0.5 * (beta[j] + beta_start[j])
                    for i in range(n):
                        h[i] = 0.5 * (h[i] + h_start[i])
                    loss_new = _pen_loss(XT, y, log_nu, pen, lam, beta, h)
                    if loss_new <= loss_cur + 1e-15 * (1.0 + abs(loss_cur)):
                        accepted = True
                        break
                if not accepted:
                    # no fraction of the step improves the true loss: stay
                    for j in range(p):
                        beta[j] = beta_start[j]
                    for i in range(n):
                        h[i] = h_start[i]
                    loss_new = loss_cur
            loss_cur = loss_new
            delta_outer = 0.0
            for j in range(p):
                d = abs(beta[j] - beta_start[j])
                if d > delta_outer:
                    delta_outer = d
            if delta_outer < tol or phase_delta < tol:
                converged = True
                break
        if not converged:
            return betas, sweeps, li + 1
        betas[li] = beta
        # gradient at the accepted solution seeds the next strong set
        for j in range(p):
            acc = 0.0
            for i in range(n):
                acc += m[i] * XT[j, i]
            grad[j] = acc
        lam_prev = lam
    return betas, sweeps, 0
