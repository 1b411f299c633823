"""Compiled Gibbs kernels shared by the public modules.

Conventions (all 0-based):

* ``C[i, k]`` cluster label of unit ``i`` at index ``k``; every column canonical.
* ``G[i, k]`` persistence indicator; column 0 is identically zero.
* ``J[k]`` number of clusters, ``S[k, l]`` size of cluster ``l``.
* ``A1[k, l]`` / ``A2[k, l]`` cluster atoms (functional: coefficient; time series:
  mean / variance). Label axis has ``n + 1`` slots so a proposed new cluster
  always has room.
* ``sc`` model scalars. Functional: ``[sigma2, tau2, phi, 0]``. Time series:
  ``[phi0, lambda2, 0, 0]``.
* ``hyp``: ``[m0, s0^2, a_tau, b_tau, a_sigma, b_sigma, a_lambda, b_lambda,
  sigma_shape_offset]``. The last entry is a test hook for mutation checks and
  must be zero in real fits.
* ``pcfg``: ``[M, a_alpha, b_alpha, a_0, a_1, A_00, A_01, A_10, A_11]``.
"""
import math

import numpy as np
from numba import njit

MODEL_PRIOR = 0
MODEL_TS = 1
MODEL_FN = 2

# partition update modes of a sweep
PART_NONE = 0
PART_ALL = 1
PART_LABELS = 2

LOG_2PI = math.log(2.0 * math.pi)
PG_TRUNC = 0.64

# hyperparameter slots
H_M0, H_S0SQ, H_ATAU, H_BTAU, H_ASIG, H_BSIG, H_ALAM, H_BLAM, H_SHAPE_OFF = range(9)
N_HYP = 9


@njit(cache=True)
def is_fixed(G, i, k, drho):
    lo = k - drho + 1
    if lo < 0:
        lo = 0
    for q in range(lo, k + 1):
        if G[i, q] != 0:
            return True
    return False


@njit(cache=True)
def fixed_matrix(G, drho, F):
    n, K = G.shape
    for i in range(n):
        last = -drho - 1
        for k in range(K):
            if G[i, k] != 0:
                last = k
            F[i, k] = (k - last) < drho


@njit(cache=True)
def log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _lag_sum(G, i, kp, dgamma, k, val):
    z = 0
    for q in range(1, dgamma + 1):
        c = kp - q
        if c < 0:
            break
        z += val if c == k else G[i, c]
    return z


@njit(cache=True)
def gamma_log_pi(i, k, G, dgamma, alpha, val):
    """log pi_{ik} with G[i, k] set to ``val`` (logistic branch, dgamma > 0)."""
    K = G.shape[1]
    hi = k + dgamma
    if hi > K - 1:
        hi = K - 1
    out = 0.0
    for kp in range(k, hi + 1):
        eta = alpha[0] + alpha[1] * _lag_sum(G, i, kp, dgamma, k, val)
        g = val if kp == k else G[i, kp]
        out += g * eta - log1pexp(eta)
    return out


@njit(cache=True)
def gamma_prob(i, k, G, C, drho, dgamma, M, alpha):
    """P(G[i, k] = 1 | rest) for k >= 1."""
    n, K = G.shape
    log_ratio = 0.0
    hi = k + drho - 1
    if hi > K - 1:
        hi = K - 1
    for kp in range(k, hi + 1):
        lo = kp - drho + 1
        if lo < 0:
            lo = 0
        others = False
        for q in range(lo, kp + 1):
            if q != k and G[i, q] != 0:
                others = True
                break
        if others:
            continue
        # R^- = R_kp \ {i}; R^+ = R^- u {i}
        cprev = C[i, kp - 1]
        ccur = C[i, kp]
        m = 0
        nj = 0
        for u in range(n):
            if u == i or not is_fixed(G, u, kp, drho):
                continue
            m += 1
            same_prev = C[u, kp - 1] == cprev
            same_cur = C[u, kp] == ccur
            if same_prev != same_cur:
                return 0.0
            if same_cur:
                nj += 1
        if nj > 0:
            log_ratio += math.log(nj) - math.log(m + M)
        else:
            log_ratio += math.log(M) - math.log(m + M)
    if dgamma == 0:
        a = alpha[k]
        if a <= 0.0:
            return 0.0
        if a >= 1.0:
            return 1.0
        lp1 = math.log(a)
        lp0 = math.log1p(-a)
    else:
        lp1 = gamma_log_pi(i, k, G, dgamma, alpha, 1)
        lp0 = gamma_log_pi(i, k, G, dgamma, alpha, 0)
    return 1.0 / (1.0 + math.exp(lp0 + log_ratio - lp1))


# ----------------------------------------------------------------------------
# Polya-Gamma PG(1, z), alternating-series sampler

@njit(cache=True)
def _log_norm_cdf(x):
    if x < -20.0:
        return -0.5 * x * x - math.log(-x) - 0.5 * LOG_2PI
    return math.log(0.5 * math.erfc(-x / math.sqrt(2.0)))


@njit(cache=True)
def _pg_a(n, x):
    kk = (n + 0.5) * math.pi
    if x > PG_TRUNC:
        return kk * math.exp(-0.5 * kk * kk * x)
    if x > 0.0:
        e = -1.5 * (math.log(0.5 * math.pi) + math.log(x)) + math.log(kk) \
            - 2.0 * (n + 0.5) * (n + 0.5) / x
        return math.exp(e)
    return 0.0


@njit(cache=True)
def _pg_mass_texpon(z):
    t = PG_TRUNC
    fz = 0.125 * math.pi * math.pi + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + _log_norm_cdf(b)
    xa = x0 + z + _log_norm_cdf(a)
    qdivp = 4.0 / math.pi * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


@njit(cache=True)
def _pg_rtigauss(rng, z):
    t = PG_TRUNC
    x = t + 1.0
    if 1.0 / t > z:
        alpha = 0.0
        while rng.random() > alpha:
            e1 = rng.exponential(1.0)
            e2 = rng.exponential(1.0)
            while e1 * e1 > 2.0 * e2 / t:
                e1 = rng.exponential(1.0)
                e2 = rng.exponential(1.0)
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > t:
            yy = rng.normal(0.0, 1.0)
            half_mu = 0.5 * mu
            mu_y = mu * yy * yy
            x = mu + half_mu * mu_y - half_mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
            if rng.random() > mu / (mu + x):
                x = mu * mu / x
    return x


@njit(cache=True)
def pg1(rng, z):
    """One draw from PG(1, z)."""
    z = abs(z) * 0.5
    fz = 0.125 * math.pi * math.pi + 0.5 * z * z
    while True:
        if rng.random() < _pg_mass_texpon(z):
            x = PG_TRUNC + rng.exponential(1.0) / fz
        else:
            x = _pg_rtigauss(rng, z)
        s = _pg_a(0, x)
        yv = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _pg_a(n, x)
                if yv <= s:
                    return 0.25 * x
            else:
                s += _pg_a(n, x)
                if yv > s:
                    break


@njit(cache=True)
def pg1_many(rng, z, out):
    for m in range(z.size):
        out[m] = pg1(rng, z[m])


# ----------------------------------------------------------------------------
# small samplers

@njit(cache=True)
def inv_gamma(rng, shape, rate):
    return rate / rng.gamma(shape, 1.0)


@njit(cache=True)
def norm_logpdf(x, mean, var):
    d = x - mean
    return -0.5 * (LOG_2PI + math.log(var) + d * d / var)


@njit(cache=True)
def sample_log_weights(rng, logw, size):
    mx = -np.inf
    for s in range(size):
        if logw[s] > mx:
            mx = logw[s]
    if mx == -np.inf:
        return -1
    tot = 0.0
    for s in range(size):
        if logw[s] > -np.inf:
            tot += math.exp(logw[s] - mx)
    u = rng.random() * tot
    acc = 0.0
    last = -1
    for s in range(size):
        if logw[s] > -np.inf:
            acc += math.exp(logw[s] - mx)
            last = s
            if u < acc:
                return s
    return last


# ----------------------------------------------------------------------------
# partition bookkeeping

@njit(cache=True)
def canonicalize_column(k, C, S, J, A1, A2):
    n = C.shape[0]
    L = A1.shape[1]
    mapping = np.full(L, -1, dtype=np.int64)
    nxt = 0
    for i in range(n):
        lab = C[i, k]
        if mapping[lab] < 0:
            mapping[lab] = nxt
            nxt += 1
    t1 = A1[k].copy()
    t2 = A2[k].copy()
    for lab in range(L):
        S[k, lab] = 0
    for lab in range(L):
        if mapping[lab] >= 0:
            A1[k, mapping[lab]] = t1[lab]
            A2[k, mapping[lab]] = t2[lab]
    for i in range(n):
        C[i, k] = mapping[C[i, k]]
        S[k, C[i, k]] += 1
    J[k] = nxt


@njit(cache=True)
def recount(C, S, J):
    n, K = C.shape
    S[:, :] = 0
    for k in range(K):
        jm = 0
        for i in range(n):
            S[k, C[i, k]] += 1
            if C[i, k] + 1 > jm:
                jm = C[i, k] + 1
        J[k] = jm


@njit(cache=True)
def count_violations(C, G, J, S, drho):
    """Number of broken invariants (compatibility, canonical form, counts)."""
    n, K = C.shape
    bad = 0
    L = S.shape[1]
    fwd = np.empty(L, dtype=np.int64)
    bwd = np.empty(L, dtype=np.int64)
    for i in range(n):
        if G[i, 0] != 0:
            bad += 1
    for k in range(K):
        nxt = 0
        cnt = np.zeros(L, dtype=np.int64)
        for i in range(n):
            lab = C[i, k]
            if lab < 0 or lab > nxt:
                bad += 1
            elif lab == nxt:
                nxt += 1
            if 0 <= lab < L:
                cnt[lab] += 1
        if nxt != J[k]:
            bad += 1
        for lab in range(L):
            if cnt[lab] != S[k, lab]:
                bad += 1
        if k == 0:
            continue
        fwd[:] = -1
        bwd[:] = -1
        for i in range(n):
            if not is_fixed(G, i, k, drho):
                continue
            a = C[i, k - 1]
            b = C[i, k]
            if fwd[a] < 0 and bwd[b] < 0:
                fwd[a] = b
                bwd[b] = a
            elif fwd[a] != b or bwd[b] != a:
                bad += 1
    return bad


@njit(cache=True)
def forward_feasible(i, k, C, S, J, F, feas):
    """Mark labels of column k (after removing i) that keep column k+1 compatible.

    ``feas[J[k]]`` refers to a brand-new cluster.
    """
    n, K = C.shape
    Jk = J[k]
    for lab in range(Jk + 1):
        feas[lab] = True
    if k + 1 >= K or not F[i, k + 1]:
        return
    target = C[i, k + 1]
    t = 0
    cntF = np.zeros(Jk + 1, dtype=np.int64)
    cntT = np.zeros(Jk + 1, dtype=np.int64)
    for u in range(n):
        if u == i or not F[u, k + 1]:
            continue
        lab = C[u, k]
        cntF[lab] += 1
        if C[u, k + 1] == target:
            t += 1
            cntT[lab] += 1
    for lab in range(Jk):
        feas[lab] = cntT[lab] == t and cntF[lab] == t
    feas[Jk] = t == 0


# ----------------------------------------------------------------------------
# functional model pieces

@njit(cache=True)
def fn_fitted(m, i, C, A1, first, vals):
    d1 = vals.shape[1]
    f = 0.0
    for t in range(d1):
        b = first[m] + t
        f += vals[m, t] * A1[b, C[i, b]]
    return f


@njit(cache=True)
def fn_partial(i, k, C, A1, y, first, vals, lo, hi, r, bk):
    """Partial residuals (excluding basis k) and b_k values on the support of basis k."""
    d1 = vals.shape[1]
    cnt = 0
    for m in range(lo[i, k], hi[i, k]):
        f = 0.0
        for t in range(d1):
            b = first[m] + t
            if b != k:
                f += vals[m, t] * A1[b, C[i, b]]
        r[cnt] = y[m] - f
        bk[cnt] = vals[m, k - first[m]]
        cnt += 1
    return cnt


@njit(cache=True)
def backward_means(kcol, C, A1, J, out_mean, out_size):
    """Mean of atoms at kcol-1 over the backward set of each label at kcol."""
    n = C.shape[0]
    L = A1.shape[1]
    mem = np.zeros((L, L), dtype=np.bool_)
    for u in range(n):
        mem[C[u, kcol - 1], C[u, kcol]] = True
    for lab in range(L):
        out_mean[lab] = 0.0
        out_size[lab] = 0
    for lab in range(L):
        s = 0.0
        c = 0
        for lp in range(L):
            if mem[lp, lab]:
                s += A1[kcol - 1, lp]
                c += 1
        out_size[lab] = c
        if c > 0:
            out_mean[lab] = s / c
    return mem


@njit(cache=True)
def fn_col_logprior(kcol, C, A1, phi, tau2, skip):
    """Log prior density of the atoms present in column kcol (label ``skip`` excluded)."""
    n = C.shape[0]
    L = A1.shape[1]
    present = np.zeros(L, dtype=np.bool_)
    for u in range(n):
        present[C[u, kcol]] = True
    out = 0.0
    if kcol == 0:
        for lab in range(L):
            if present[lab] and lab != skip:
                out += norm_logpdf(A1[0, lab], 0.0, tau2)
        return out
    bm = np.empty(L)
    bs = np.empty(L, dtype=np.int64)
    backward_means(kcol, C, A1, np.zeros(1, dtype=np.int64), bm, bs)
    for lab in range(L):
        if present[lab] and lab != skip:
            out += norm_logpdf(A1[kcol, lab], phi * bm[lab], tau2)
    return out


@njit(cache=True)
def fn_theta_cond(k, j, C, A1, sc, y, first, vals, lo, hi, mem_prev, mem_next):
    """Mean and variance of the Gaussian full conditional of A1[k, j].

    ``mem_prev[l, j]`` marks transitions from label l at k-1 to j at k;
    ``mem_next[j, j']`` transitions from k to k+1 (ignored at the last column).
    """
    n, K = C.shape
    L = A1.shape[1]
    sigma2, tau2, phi = sc[0], sc[1], sc[2]
    prec = 1.0 / tau2
    lin = 0.0
    if k >= 1:
        s = 0.0
        c = 0
        for lp in range(L):
            if mem_prev[lp, j]:
                s += A1[k - 1, lp]
                c += 1
        lin += phi * (s / c) / tau2
    if k + 1 < K:
        for jn in range(L):
            if not mem_next[j, jn]:
                continue
            c = 0
            other = 0.0
            for lp in range(L):
                if mem_next[lp, jn]:
                    c += 1
                    if lp != j:
                        other += A1[k, lp]
            a = phi / c
            eps = A1[k + 1, jn] - a * other
            prec += a * a / tau2
            lin += a * eps / tau2
    d1 = vals.shape[1]
    for i in range(n):
        if C[i, k] != j:
            continue
        for m in range(lo[i, k], hi[i, k]):
            f = 0.0
            bkv = 0.0
            for t in range(d1):
                b = first[m] + t
                if b == k:
                    bkv = vals[m, t]
                else:
                    f += vals[m, t] * A1[b, C[i, b]]
            prec += bkv * bkv / sigma2
            lin += bkv * (y[m] - f) / sigma2
    return lin / prec, 1.0 / prec


@njit(cache=True)
def _transitions(kcol, C, L):
    mem = np.zeros((L, L), dtype=np.bool_)
    for u in range(C.shape[0]):
        mem[C[u, kcol - 1], C[u, kcol]] = True
    return mem


@njit(cache=True)
def fn_update_theta(rng, C, J, A1, sc, y, first, vals, lo, hi):
    n, K = C.shape
    L = A1.shape[1]
    empty = np.zeros((L, L), dtype=np.bool_)
    for k in range(K):
        mem_prev = _transitions(k, C, L) if k >= 1 else empty
        mem_next = _transitions(k + 1, C, L) if k + 1 < K else empty
        for j in range(J[k]):
            mean, var = fn_theta_cond(k, j, C, A1, sc, y, first, vals, lo, hi,
                                      mem_prev, mem_next)
            A1[k, j] = mean + math.sqrt(var) * rng.normal(0.0, 1.0)


@njit(cache=True)
def fn_sigma2_params(C, A1, y, first, vals, offs, hyp):
    n = C.shape[0]
    ss = 0.0
    for i in range(n):
        for m in range(offs[i], offs[i + 1]):
            r = y[m] - fn_fitted(m, i, C, A1, first, vals)
            ss += r * r
    shape = hyp[H_ASIG] + 0.5 * y.size + hyp[H_SHAPE_OFF]
    rate = hyp[H_BSIG] + 0.5 * ss
    return shape, rate


@njit(cache=True)
def fn_tau2_params(C, J, A1, sc, hyp):
    n, K = C.shape
    L = A1.shape[1]
    phi = sc[2]
    tot_j = 0
    ss = 0.0
    bm = np.empty(L)
    bs = np.empty(L, dtype=np.int64)
    for k in range(K):
        tot_j += J[k]
        if k == 0:
            for j in range(J[0]):
                ss += A1[0, j] ** 2
        else:
            backward_means(k, C, A1, J, bm, bs)
            for j in range(J[k]):
                ss += (A1[k, j] - phi * bm[j]) ** 2
    return hyp[H_ATAU] + 0.5 * tot_j, hyp[H_BTAU] + 0.5 * ss


@njit(cache=True)
def fn_phi_params(C, J, A1, sc, hyp):
    n, K = C.shape
    L = A1.shape[1]
    tau2 = sc[1]
    s2 = 0.0
    sxy = 0.0
    bm = np.empty(L)
    bs = np.empty(L, dtype=np.int64)
    for k in range(1, K):
        backward_means(k, C, A1, J, bm, bs)
        for j in range(J[k]):
            s2 += bm[j] * bm[j]
            sxy += A1[k, j] * bm[j]
    var = 1.0 / (1.0 / hyp[H_S0SQ] + s2 / tau2)
    mean = (hyp[H_M0] / hyp[H_S0SQ] + sxy / tau2) * var
    return mean, var


@njit(cache=True)
def fn_update_params(rng, C, J, A1, sc, hyp, y, first, vals, offs, lo, hi):
    fn_update_theta(rng, C, J, A1, sc, y, first, vals, lo, hi)
    mean, var = fn_phi_params(C, J, A1, sc, hyp)
    sc[2] = mean + math.sqrt(var) * rng.normal(0.0, 1.0)
    shape, rate = fn_tau2_params(C, J, A1, sc, hyp)
    sc[1] = inv_gamma(rng, shape, rate)
    shape, rate = fn_sigma2_params(C, A1, y, first, vals, offs, hyp)
    sc[0] = inv_gamma(rng, shape, rate)


@njit(cache=True)
def fn_loglik_total(C, A1, sc, y, first, vals, offs):
    n = C.shape[0]
    out = 0.0
    for i in range(n):
        for m in range(offs[i], offs[i + 1]):
            out += norm_logpdf(y[m], fn_fitted(m, i, C, A1, first, vals), sc[0])
    return out


# ----------------------------------------------------------------------------
# time-series model pieces

@njit(cache=True)
def ts_phi0_params(V1, sc, hyp, K):
    prec = 1.0 / hyp[H_S0SQ] + K / sc[1]
    return (hyp[H_M0] / hyp[H_S0SQ] + V1[:K].sum() / sc[1]) / prec, 1.0 / prec


@njit(cache=True)
def ts_lambda2_params(V1, sc, hyp, K):
    ss = 0.0
    for k in range(K):
        ss += (V1[k] - sc[0]) ** 2
    return hyp[H_ALAM] + 0.5 * K, hyp[H_BLAM] + 0.5 * ss


@njit(cache=True)
def ts_theta_params(k, J, A1, V2, sc):
    Jk = J[k]
    prec = 1.0 / sc[1] + Jk / V2[k]
    return (sc[0] / sc[1] + A1[k, :Jk].sum() / V2[k]) / prec, 1.0 / prec


@njit(cache=True)
def ts_tau2_params(k, J, A1, V1, hyp):
    ss = 0.0
    for j in range(J[k]):
        ss += (A1[k, j] - V1[k]) ** 2
    return hyp[H_ATAU] + 0.5 * J[k], hyp[H_BTAU] + 0.5 * ss


@njit(cache=True)
def ts_mu_params(k, j, C, A2, V1, V2, Y):
    sy = 0.0
    c = 0
    for i in range(C.shape[0]):
        if C[i, k] == j:
            sy += Y[i, k]
            c += 1
    prec = 1.0 / V2[k] + c / A2[k, j]
    return (V1[k] / V2[k] + sy / A2[k, j]) / prec, 1.0 / prec


@njit(cache=True)
def ts_sig_params(k, j, C, A1, hyp, Y):
    ss = 0.0
    c = 0
    for i in range(C.shape[0]):
        if C[i, k] == j:
            ss += (Y[i, k] - A1[k, j]) ** 2
            c += 1
    return hyp[H_ASIG] + 0.5 * c + hyp[H_SHAPE_OFF], hyp[H_BSIG] + 0.5 * ss


@njit(cache=True)
def ts_update_params(rng, C, J, A1, A2, V1, V2, sc, hyp, Y):
    """Order: phi0, lambda2, (theta_k, tau2_k), (mu*_kj, sigma*2_kj)."""
    K = C.shape[1]
    mean, var = ts_phi0_params(V1, sc, hyp, K)
    sc[0] = mean + math.sqrt(var) * rng.normal(0.0, 1.0)
    shape, rate = ts_lambda2_params(V1, sc, hyp, K)
    sc[1] = inv_gamma(rng, shape, rate)
    for k in range(K):
        mean, var = ts_theta_params(k, J, A1, V2, sc)
        V1[k] = mean + math.sqrt(var) * rng.normal(0.0, 1.0)
        shape, rate = ts_tau2_params(k, J, A1, V1, hyp)
        V2[k] = inv_gamma(rng, shape, rate)
    for k in range(K):
        for j in range(J[k]):
            mean, var = ts_mu_params(k, j, C, A2, V1, V2, Y)
            A1[k, j] = mean + math.sqrt(var) * rng.normal(0.0, 1.0)
            shape, rate = ts_sig_params(k, j, C, A1, hyp, Y)
            A2[k, j] = inv_gamma(rng, shape, rate)


@njit(cache=True)
def ts_loglik_total(C, A1, A2, Y):
    n, K = C.shape
    out = 0.0
    for i in range(n):
        for k in range(K):
            j = C[i, k]
            out += norm_logpdf(Y[i, k], A1[k, j], A2[k, j])
    return out


# ----------------------------------------------------------------------------
# alpha / omega

@njit(cache=True)
def update_alpha_beta_all(rng, G, alpha, a_alpha, b_alpha):
    n, K = G.shape
    alpha[0] = rng.beta(a_alpha, b_alpha)
    for k in range(1, K):
        s = 0
        for i in range(n):
            s += G[i, k]
        alpha[k] = rng.beta(a_alpha + s, b_alpha + n - s)


@njit(cache=True)
def logistic_posterior(G, omega, dgamma, pcfg):
    """Precision matrix and linear term of the Gaussian conditional of alpha."""
    n, K = G.shape
    A00, A01, A10, A11 = pcfg[5], pcfg[6], pcfg[7], pcfg[8]
    det = A00 * A11 - A01 * A10
    i00, i01, i10, i11 = A11 / det, -A01 / det, -A10 / det, A00 / det
    p00, p01, p11 = i00, 0.5 * (i01 + i10), i11
    b0 = i00 * pcfg[3] + i01 * pcfg[4]
    b1 = i10 * pcfg[3] + i11 * pcfg[4]
    for k in range(1, K):
        for i in range(n):
            z = _lag_sum(G, i, k, dgamma, -1, 0)
            w = omega[i, k]
            kap = G[i, k] - 0.5
            p00 += w
            p01 += w * z
            p11 += w * z * z
            b0 += kap
            b1 += kap * z
    return p00, p01, p11, b0, b1


@njit(cache=True)
def update_alpha_omega(rng, G, alpha, omega, dgamma, pcfg):
    """Refresh omega given (alpha, gamma), then draw alpha given (omega, gamma).

    omega is drawn first because gamma was just updated with omega integrated
    out. Returns 0 on success, 1 if the posterior precision is not positive definite.
    """
    draw_omega(rng, G, alpha, omega, dgamma)
    p00, p01, p11, b0, b1 = logistic_posterior(G, omega, dgamma, pcfg)
    det = p00 * p11 - p01 * p01
    if not (p00 > 0.0 and det > 0.0):
        return 1
    c00, c01, c11 = p11 / det, -p01 / det, p00 / det
    m0 = c00 * b0 + c01 * b1
    m1 = c01 * b0 + c11 * b1
    l00 = math.sqrt(c00)
    l10 = c01 / l00
    r = c11 - l10 * l10
    if not r > 0.0:
        return 1
    l11 = math.sqrt(r)
    e0 = rng.normal(0.0, 1.0)
    e1 = rng.normal(0.0, 1.0)
    alpha[0] = m0 + l00 * e0
    alpha[1] = m1 + l10 * e0 + l11 * e1
    return 0


@njit(cache=True)
def draw_omega(rng, G, alpha, omega, dgamma):
    n, K = G.shape
    for i in range(n):
        omega[i, 0] = pg1(rng, 0.0)
        for k in range(1, K):
            omega[i, k] = pg1(rng, alpha[0] + alpha[1] * _lag_sum(G, i, k, dgamma, -1, 0))


# ----------------------------------------------------------------------------
# cluster label move

@njit(cache=True)
def fn_coupling(i, k, C, S, J, A1, sc, newslot, out):
    """Candidate-dependent part of the log prior of the atoms for moving i at column k.

    Only atoms whose backward set can change contribute: the candidate label at
    k (if it gains i's previous label) and the label of i at k+1. The new-cluster
    atom itself is excluded (it cancels against its auxiliary proposal).
    """
    n, K = C.shape
    phi, tau2 = sc[2], sc[1]
    Jk = J[k]
    for lab in range(Jk + 1):
        out[lab] = 0.0
    if k >= 1:
        Jp = J[k - 1]
        mem = np.zeros((Jp, Jk + 1), dtype=np.bool_)
        for u in range(n):
            if u != i:
                mem[C[u, k - 1], C[u, k]] = True
        cp = C[i, k - 1]
        for x in range(Jk):
            if S[k, x] == 0 or mem[cp, x]:
                continue
            s = 0.0
            c = 0
            for lp in range(Jp):
                if mem[lp, x]:
                    s += A1[k - 1, lp]
                    c += 1
            base = norm_logpdf(A1[k, x], phi * s / c, tau2)
            out[x] = norm_logpdf(A1[k, x], phi * (s + A1[k - 1, cp]) / (c + 1), tau2) - base
    if k + 1 < K:
        ln = C[i, k + 1]
        memn = np.zeros(Jk + 1, dtype=np.bool_)
        for u in range(n):
            if u != i and C[u, k + 1] == ln:
                memn[C[u, k]] = True
        s = 0.0
        c = 0
        for x in range(Jk + 1):
            if memn[x]:
                s += A1[k, x]
                c += 1
        for x in range(Jk + 1):
            if x != newslot and (x == Jk or S[k, x] == 0):
                continue
            if memn[x]:
                mean = s / c
            else:
                mean = (s + A1[k, x]) / (c + 1)
            out[x] += norm_logpdf(A1[k + 1, ln], phi * mean, tau2)


@njit(cache=True)
def c_logweights(i, k, model, coupling, C, S, J, F, A1, A2, sc, M,
                 y, first, vals, lo, hi, Y, newslot, logw, rbuf, bbuf):
    """Log weights of every candidate label for unit i at column k.

    Expects unit i already removed from ``S`` and the auxiliary atom stored at
    ``newslot``. The new-cluster slot is ``J[k]`` unless i was a singleton, in
    which case ``newslot`` is i's own (now empty) label. Infeasible or unused
    slots get ``-inf``.
    """
    n, K = C.shape
    Jk = J[k]
    feas = np.empty(Jk + 1, dtype=np.bool_)
    forward_feasible(i, k, C, S, J, F, feas)
    for lab in range(logw.size):
        logw[lab] = -np.inf
    cnt = 0
    cpl = np.zeros(Jk + 1)
    if model == MODEL_FN:
        cnt = fn_partial(i, k, C, A1, y, first, vals, lo, hi, rbuf, bbuf)
        if coupling:
            fn_coupling(i, k, C, S, J, A1, sc, newslot, cpl)
    for lab in range(Jk + 1):
        is_new = lab == Jk
        if is_new:
            slot = newslot
        elif S[k, lab] == 0:
            continue
        else:
            slot = lab
        if not feas[lab]:
            continue
        w = math.log(M) if is_new else math.log(S[k, lab])
        if model == MODEL_TS:
            w += norm_logpdf(Y[i, k], A1[k, slot], A2[k, slot])
        elif model == MODEL_FN:
            s2 = sc[0]
            for m in range(cnt):
                d = rbuf[m] - bbuf[m] * A1[k, slot]
                w -= 0.5 * d * d / s2
            if coupling:
                w += cpl[slot]
        logw[slot] = w
    return cnt


@njit(cache=True)
def c_step(rng, i, k, model, coupling, C, S, J, F, A1, A2, V1, V2, sc, hyp, M,
           y, first, vals, lo, hi, Y, logw, rbuf, bbuf):
    o = C[i, k]
    S[k, o] -= 1
    singleton = S[k, o] == 0
    Jk = J[k]
    newslot = o if singleton else Jk
    if not singleton:
        if model == MODEL_FN:
            if k == 0:
                A1[k, Jk] = math.sqrt(sc[1]) * rng.normal(0.0, 1.0)
            else:
                A1[k, Jk] = sc[2] * A1[k - 1, C[i, k - 1]] + math.sqrt(sc[1]) * rng.normal(0.0, 1.0)
        elif model == MODEL_TS:
            A1[k, Jk] = V1[k] + math.sqrt(V2[k]) * rng.normal(0.0, 1.0)
            A2[k, Jk] = inv_gamma(rng, hyp[H_ASIG], hyp[H_BSIG])
    c_logweights(i, k, model, coupling, C, S, J, F, A1, A2, sc, M,
                 y, first, vals, lo, hi, Y, newslot, logw, rbuf, bbuf)
    choice = sample_log_weights(rng, logw, Jk + 1)
    if choice < 0:
        # no feasible label: cannot happen for a valid state; keep the old one
        S[k, o] += 1
        return 1
    C[i, k] = choice
    S[k, choice] += 1
    if choice == Jk:
        J[k] = Jk + 1
    if choice != o:
        canonicalize_column(k, C, S, J, A1, A2)
    return 0


# ----------------------------------------------------------------------------
# sweep and chain driver

@njit(cache=True)
def sweep(rng, model, upd_part, upd_alpha, upd_params, coupling,
          C, G, J, S, alpha, omega, A1, A2, V1, V2, sc, hyp, drho, dgamma, pcfg,
          y, first, vals, offs, lo, hi, Y, F, logw, rbuf, bbuf):
    n, K = C.shape
    M = pcfg[0]
    status = 0
    if upd_part > 0:
        fixed_matrix(G, drho, F)
        for k in range(K):
            for i in range(n):
                if k > 0 and F[i, k]:
                    continue
                status += c_step(rng, i, k, model, coupling, C, S, J, F, A1, A2, V1, V2,
                                 sc, hyp, M, y, first, vals, lo, hi, Y, logw, rbuf, bbuf)
    if upd_part == PART_ALL:
        for k in range(1, K):
            for i in range(n):
                p = gamma_prob(i, k, G, C, drho, dgamma, M, alpha)
                G[i, k] = 1 if rng.random() < p else 0
    if upd_alpha:
        if dgamma == 0:
            update_alpha_beta_all(rng, G, alpha, pcfg[1], pcfg[2])
        else:
            if update_alpha_omega(rng, G, alpha, omega, dgamma, pcfg) != 0:
                return -1
    if upd_params:
        if model == MODEL_FN:
            fn_update_params(rng, C, J, A1, sc, hyp, y, first, vals, offs, lo, hi)
        elif model == MODEL_TS:
            ts_update_params(rng, C, J, A1, A2, V1, V2, sc, hyp, Y)
    return status


@njit(cache=True)
def loglik_total(model, C, A1, A2, sc, y, first, vals, offs, Y):
    if model == MODEL_FN:
        return fn_loglik_total(C, A1, sc, y, first, vals, offs)
    if model == MODEL_TS:
        return ts_loglik_total(C, A1, A2, Y)
    return 0.0


@njit(cache=True)
def run_sweeps(rng, n_iter, burn_in, thin, check_every, free_iters, model, upd_part, upd_alpha,
               upd_params, coupling,
               C, G, J, S, alpha, omega, A1, A2, V1, V2, sc, hyp, drho, dgamma, pcfg,
               y, first, vals, offs, lo, hi, Y,
               out_C, out_G, out_A1, out_A2, out_V1, out_V2, out_sc, out_alpha, trace,
               counters):
    """Run ``n_iter`` sweeps, storing every ``thin``-th post burn-in state.

    The first ``free_iters`` sweeps keep the persistence indicators fixed.
    ``counters`` = [invariant checks, violations, failed label moves].
    Returns -1 on success or the iteration index of a fatal error.
    """
    n, K = C.shape
    F = np.zeros((n, K), dtype=np.bool_)
    L = A1.shape[1]
    logw = np.empty(L)
    rbuf = np.empty(y.size + 1)
    bbuf = np.empty(y.size + 1)
    s = 0
    for it in range(n_iter):
        mode = PART_NONE
        if upd_part:
            mode = PART_LABELS if it < free_iters else PART_ALL
        st = sweep(rng, model, mode, upd_alpha, upd_params, coupling,
                   C, G, J, S, alpha, omega, A1, A2, V1, V2, sc, hyp, drho, dgamma, pcfg,
                   y, first, vals, offs, lo, hi, Y, F, logw, rbuf, bbuf)
        if st < 0:
            return it
        counters[2] += st
        if check_every > 0 and (it + 1) % check_every == 0:
            counters[0] += 1
            v = count_violations(C, G, J, S, drho)
            if v > 0:
                counters[1] += v
                return it
        trace[it] = loglik_total(model, C, A1, A2, sc, y, first, vals, offs, Y)
        if it >= burn_in and (it - burn_in + 1) % thin == 0 and s < out_C.shape[0]:
            for i in range(n):
                for k in range(K):
                    out_C[s, i, k] = C[i, k]
                    out_G[s, i, k] = G[i, k]
            for k in range(K):
                for lab in range(L):
                    out_A1[s, k, lab] = A1[k, lab] if lab < J[k] else np.nan
                    out_A2[s, k, lab] = A2[k, lab] if lab < J[k] else np.nan
                out_V1[s, k] = V1[k]
                out_V2[s, k] = V2[k]
            for q in range(sc.size):
                out_sc[s, q] = sc[q]
            for q in range(alpha.size):
                out_alpha[s, q] = alpha[q]
            s += 1
    return -1


# ----------------------------------------------------------------------------
# forward simulation from the prior (Geweke harness, simulators)

@njit(cache=True)
def draw_alpha_prior(rng, alpha, dgamma, pcfg):
    if dgamma == 0:
        for k in range(alpha.size):
            alpha[k] = rng.beta(pcfg[1], pcfg[2])
        return
    l00 = math.sqrt(pcfg[5])
    l10 = pcfg[7] / l00
    l11 = math.sqrt(pcfg[8] - l10 * l10)
    e0 = rng.normal(0.0, 1.0)
    e1 = rng.normal(0.0, 1.0)
    alpha[0] = pcfg[3] + l00 * e0
    alpha[1] = pcfg[4] + l10 * e0 + l11 * e1


@njit(cache=True)
def _persist_prob(i, k, G, alpha, dgamma):
    if dgamma == 0:
        return alpha[k]
    eta = alpha[0] + alpha[1] * _lag_sum(G, i, k, dgamma, -1, 0)
    return 1.0 / (1.0 + math.exp(-eta))


@njit(cache=True)
def draw_partitions_prior(rng, C, G, J, S, alpha, drho, dgamma, M):
    """Forward simulation of (G, C): fixed units keep their co-clustering, free
    units are seated sequentially by the CRP."""
    n, K = C.shape
    L = S.shape[1]
    sizes = np.zeros(L, dtype=np.int64)
    mapping = np.empty(L, dtype=np.int64)
    for i in range(n):
        G[i, 0] = 0
    for k in range(K):
        if k > 0:
            for i in range(n):
                G[i, k] = 1 if rng.random() < _persist_prob(i, k, G, alpha, dgamma) else 0
        sizes[:] = 0
        mapping[:] = -1
        nl = 0
        m = 0
        if k > 0:
            for i in range(n):
                if is_fixed(G, i, k, drho):
                    a = C[i, k - 1]
                    if mapping[a] < 0:
                        mapping[a] = nl
                        nl += 1
                    C[i, k] = mapping[a]
                    sizes[C[i, k]] += 1
                    m += 1
        for i in range(n):
            if k > 0 and is_fixed(G, i, k, drho):
                continue
            u = rng.random() * (m + M)
            acc = 0.0
            lab = nl
            for l in range(nl):
                acc += sizes[l]
                if u < acc:
                    lab = l
                    break
            if lab == nl:
                nl += 1
            C[i, k] = lab
            sizes[lab] += 1
            m += 1
    recount(C, S, J)
    dummy = np.zeros((K, L))
    for k in range(K):
        canonicalize_column(k, C, S, J, dummy, dummy)


@njit(cache=True)
def draw_params_prior(rng, model, C, J, A1, A2, V1, V2, sc, hyp):
    n, K = C.shape
    L = A1.shape[1]
    A1[:, :] = np.nan
    if model == MODEL_FN:
        sc[0] = inv_gamma(rng, hyp[H_ASIG], hyp[H_BSIG])
        sc[1] = inv_gamma(rng, hyp[H_ATAU], hyp[H_BTAU])
        sc[2] = hyp[H_M0] + math.sqrt(hyp[H_S0SQ]) * rng.normal(0.0, 1.0)
        sd = math.sqrt(sc[1])
        bm = np.empty(L)
        bs = np.empty(L, dtype=np.int64)
        for k in range(K):
            if k == 0:
                for j in range(J[0]):
                    A1[0, j] = sd * rng.normal(0.0, 1.0)
            else:
                backward_means(k, C, A1, J, bm, bs)
                for j in range(J[k]):
                    A1[k, j] = sc[2] * bm[j] + sd * rng.normal(0.0, 1.0)
    elif model == MODEL_TS:
        A2[:, :] = np.nan
        sc[0] = hyp[H_M0] + math.sqrt(hyp[H_S0SQ]) * rng.normal(0.0, 1.0)
        sc[1] = inv_gamma(rng, hyp[H_ALAM], hyp[H_BLAM])
        for k in range(K):
            V1[k] = sc[0] + math.sqrt(sc[1]) * rng.normal(0.0, 1.0)
            V2[k] = inv_gamma(rng, hyp[H_ATAU], hyp[H_BTAU])
            for j in range(J[k]):
                A1[k, j] = V1[k] + math.sqrt(V2[k]) * rng.normal(0.0, 1.0)
                A2[k, j] = inv_gamma(rng, hyp[H_ASIG], hyp[H_BSIG])


@njit(cache=True)
def draw_data(rng, model, C, A1, A2, sc, y, first, vals, offs, Y):
    n, K = C.shape
    if model == MODEL_FN:
        sd = math.sqrt(sc[0])
        for i in range(n):
            for m in range(offs[i], offs[i + 1]):
                y[m] = fn_fitted(m, i, C, A1, first, vals) + sd * rng.normal(0.0, 1.0)
    elif model == MODEL_TS:
        for i in range(n):
            for k in range(K):
                j = C[i, k]
                Y[i, k] = A1[k, j] + math.sqrt(A2[k, j]) * rng.normal(0.0, 1.0)


N_STATS = 13


@njit(cache=True)
def geweke_stats(model, C, G, J, alpha, dgamma, A1, A2, V1, V2, sc, y, Y, out):
    """Fixed statistic battery; variances enter on the log scale."""
    n, K = C.shape
    jm = 0.0
    for k in range(K):
        jm += J[k]
    gs = 0.0
    for i in range(n):
        for k in range(K):
            gs += G[i, k]
    out[0] = jm / K
    out[1] = gs
    if dgamma == 0:
        out[2] = alpha[1:].mean()
        out[3] = (alpha[1:] ** 2).mean()
    else:
        out[2] = alpha[0]
        out[3] = alpha[1]
    a0 = 0.0
    a0sq = 0.0
    for k in range(K):
        v = A1[k, C[0, k]]
        a0 += v
        a0sq += v * v
    out[4] = a0 / K
    out[5] = a0sq / K
    if model == MODEL_FN:
        out[6] = math.log(sc[0])
        out[7] = math.log(sc[1])
        out[8] = sc[2]
        out[9] = sc[2] * sc[2]
        out[10] = y.mean()
        out[11] = (y * y).mean()
        out[12] = np.abs(y).mean()
    else:
        out[6] = sc[0]
        out[7] = math.log(sc[1])
        lv = 0.0
        for k in range(K):
            lv += math.log(V2[k])
        out[8] = V1[:K].mean()
        out[9] = lv / K
        out[10] = Y.mean()
        out[11] = (Y * Y).mean()
        ls = 0.0
        for k in range(K):
            ls += math.log(A2[k, C[0, k]])
        out[12] = ls / K


@njit(cache=True)
def geweke_marginal(rng, n_draws, model, C, G, J, S, alpha, omega, A1, A2, V1, V2, sc, hyp,
                    drho, dgamma, pcfg, y, first, vals, offs, Y, out):
    for t in range(n_draws):
        draw_alpha_prior(rng, alpha, dgamma, pcfg)
        draw_partitions_prior(rng, C, G, J, S, alpha, drho, dgamma, pcfg[0])
        draw_params_prior(rng, model, C, J, A1, A2, V1, V2, sc, hyp)
        draw_data(rng, model, C, A1, A2, sc, y, first, vals, offs, Y)
        geweke_stats(model, C, G, J, alpha, dgamma, A1, A2, V1, V2, sc, y, Y, out[t])


@njit(cache=True)
def geweke_successive(rng, n_rounds, model, coupling, C, G, J, S, alpha, omega, A1, A2, V1,
                      V2, sc, hyp, drho, dgamma, pcfg, y, first, vals, offs, lo, hi, Y, out):
    """Alternate one full Gibbs sweep with a fresh data draw.

    Compatibility is checked after every sweep. Returns -1 or the failing round.
    """
    n, K = C.shape
    F = np.zeros((n, K), dtype=np.bool_)
    logw = np.empty(A1.shape[1])
    rbuf = np.empty(y.size + 1)
    bbuf = np.empty(y.size + 1)
    for t in range(n_rounds):
        st = sweep(rng, model, PART_ALL, True, True, coupling, C, G, J, S, alpha, omega, A1, A2,
                   V1, V2, sc, hyp, drho, dgamma, pcfg, y, first, vals, offs, lo, hi, Y, F,
                   logw, rbuf, bbuf)
        if st != 0 or count_violations(C, G, J, S, drho) > 0:
            return t
        draw_data(rng, model, C, A1, A2, sc, y, first, vals, offs, Y)
        geweke_stats(model, C, G, J, alpha, dgamma, A1, A2, V1, V2, sc, y, Y, out[t])
    return -1
