"""Compiled hot loops for pmf evaluation, sampling, and MCMC sweeps.

These mirror the readable implementations in ``sp``, ``baselines`` and
``reference``; tests pin them against each other.  Label arrays may hold
any non-negative integers below n: only the induced equivalence classes
matter.  Permutations are 0-based.

Baseline codes: 0 Ewens-Pitman (par = alpha, delta), 1 uniform partition,
2 Jensen-Liu (par[0] = mass), 3 fixed partition (target array).
Prior-term kinds: 0 SP, 1 baseline only, 2 LSP, 3 CPP/Binder, 4 CPP/VI.
"""

import numpy as np
from numba import njit

EP, UP, JL, FIXED = 0, 1, 2, 3
K_SP, K_BASE, K_LSP, K_CPP_BINDER, K_CPP_VI = 0, 1, 2, 3, 4


@njit(cache=True)
def _logsumexp(x, m):
    top = -np.inf
    for c in range(m):
        if x[c] > top:
            top = x[c]
    if top == -np.inf:
        return -np.inf
    acc = 0.0
    for c in range(m):
        acc += np.exp(x[c] - top)
    return top + np.log(acc)


@njit(cache=True)
def _baseline_weights(out, k, q, n, item, size, bkind, bpar, btarget, tmap, logbell):
    """Fill out[0..q] with log CAPF at 0-based step k (k items allocated)."""
    if bkind == EP:
        a = bpar[0]
        d = bpar[1]
        denom = np.log(k + a)
        for c in range(q):
            out[c] = np.log(size[c] - d) - denom
        out[q] = np.log(a + d * q) - denom
    elif bkind == JL:
        a = bpar[0]
        for c in range(q):
            out[c] = -np.log(q + a)
        out[q] = np.log(a) - np.log(q + a)
    elif bkind == UP:
        total = logbell[n - k, q]
        for c in range(q):
            out[c] = logbell[n - k - 1, q] - total
        out[q] = logbell[n - k - 1, q + 1] - total
    else:
        choice = tmap[btarget[item]]
        if choice < 0:
            choice = q
        for c in range(q + 1):
            out[c] = -np.inf
        out[choice] = 0.0


@njit(cache=True)
def sp_logpmf(labels, perm, anchor, omega, psi, bkind, bpar, btarget, logbell):
    """Log pmf along ``perm``.  Baseline weights are kept unnormalized in
    linear space and the anchor factors are shifted by their maximum, so a
    step costs one exp per cluster and a single log."""
    n = labels.shape[0]
    cmap = np.full(n + 1, -1, np.int64)
    tmap = np.full(n + 1, -1, np.int64)
    amax = 0
    for i in range(n):
        if anchor[i] > amax:
            amax = anchor[i]
    S = np.zeros((n, amax + 1))
    T = np.zeros(n)
    size = np.zeros(n)
    e = np.empty(n + 1)
    a = bpar[0]
    d = bpar[1]
    q = 0
    total = 0.0
    for k in range(n):
        item = perm[k]
        c = cmap[labels[item]]
        if k > 0:
            chosen = q if c < 0 else c
            if bkind == FIXED:
                want = tmap[btarget[item]]
                if want < 0:
                    want = q
                if want != chosen:
                    return -np.inf
            else:
                # unnormalized baseline weights: existing clusters and new
                if bkind == EP:
                    new_w = a + d * q
                elif bkind == JL:
                    new_w = a
                else:
                    new_w = np.exp(logbell[n - k - 1, q + 1] - logbell[n - k - 1, q])
                wk = omega[item]
                if wk == 0.0:
                    if bkind == EP:
                        denom = k + a
                        num = new_w if c < 0 else size[c] - d
                    else:
                        denom = q + new_w
                        num = new_w if c < 0 else 1.0
                    total += np.log(num / denom)
                else:
                    scale = wk / (k * k)
                    m = anchor[item]
                    top = 0.0
                    for j in range(q):
                        s = S[j, m]
                        t = T[j]
                        e[j] = scale * (s * s - psi * t * t)
                        if e[j] > top:
                            top = e[j]
                    acc = new_w * np.exp(-top)
                    for j in range(q):
                        bw = size[j] - d if bkind == EP else 1.0
                        acc += bw * np.exp(e[j] - top)
                    if c < 0:
                        total += np.log(new_w / acc) - top
                    else:
                        bw = size[c] - d if bkind == EP else 1.0
                        total += np.log(bw / acc) + e[c] - top
        if c < 0:
            c = q
            cmap[labels[item]] = q
            q += 1
        if bkind == FIXED and tmap[btarget[item]] < 0:
            tmap[btarget[item]] = c
        size[c] += 1.0
        S[c, anchor[item]] += omega[item]
        T[c] += omega[item]
    return total


@njit(cache=True)
def lsp_logpmf(labels, perm, anchor, omega):
    """Location-scale partition pmf with scalar shrinkage ``omega``."""
    n = labels.shape[0]
    cmap = np.full(n + 1, -1, np.int64)
    amax = 0
    for i in range(n):
        if anchor[i] > amax:
            amax = anchor[i]
    A = np.zeros((n, amax + 1))
    seen = np.zeros(amax + 1)
    size = np.zeros(n)
    w = np.empty(n + 1)
    n_anchor = 0
    q = 0
    total = 0.0
    for k in range(n):
        item = perm[k]
        m = anchor[item]
        c = cmap[labels[item]]
        if k > 0:
            for j in range(q):
                w[j] = np.log(1.0 + omega * A[j, m]) - np.log(1.0 + n_anchor + omega * size[j])
            fresh = 1.0 if seen[m] == 0 else 0.0
            w[q] = np.log(1.0 + omega * fresh) - np.log(1.0 + n_anchor + omega)
            chosen = q if c < 0 else c
            total += w[chosen] - _logsumexp(w, q + 1)
        if c < 0:
            c = q
            cmap[labels[item]] = q
            q += 1
        size[c] += 1.0
        A[c, m] += 1.0
        if seen[m] == 0:
            n_anchor += 1
        seen[m] += 1.0
    return total


@njit(cache=True)
def binder(a, b):
    n = a.shape[0]
    out = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if (a[i] == a[j]) != (b[i] == b[j]):
                out += 1.0
    return out


@njit(cache=True)
def vi(a, b):
    n = a.shape[0]
    la = np.max(a) + 1
    lb = np.max(b) + 1
    joint = np.zeros((la, lb))
    for i in range(n):
        joint[a[i], b[i]] += 1.0
    ra = joint.sum(axis=1)
    rb = joint.sum(axis=0)
    h = 0.0
    for x in range(la):
        if ra[x] > 0:
            h += ra[x] / n * np.log(ra[x] / n)
    for y in range(lb):
        if rb[y] > 0:
            h += rb[y] / n * np.log(rb[y] / n)
    for x in range(la):
        for y in range(lb):
            if joint[x, y] > 0:
                p = joint[x, y] / n
                h -= 2.0 * p * np.log(p)
    return max(h, 0.0)


@njit(cache=True)
def prior_logp(kind, labels, perm, anchor, omega, psi, scal,
               bkind, bpar, btarget, logbell):
    """Log prior of ``labels`` under one term.  CPP terms are unnormalized."""
    if kind == K_SP:
        return sp_logpmf(labels, perm, anchor, omega, psi, bkind, bpar, btarget, logbell)
    if kind == K_LSP:
        return lsp_logpmf(labels, perm, anchor, scal)
    zero = np.zeros(labels.shape[0])
    base = sp_logpmf(labels, perm, anchor, zero, 0.0, bkind, bpar, btarget, logbell)
    if kind == K_BASE:
        return base
    if kind == K_CPP_BINDER:
        return base - scal * binder(labels, anchor)
    return base - scal * vi(labels, anchor)


@njit(cache=True)
def sp_logpmf_table(parts, perms, anchor, omega, psi, bkind, bpar, btarget, logbell):
    out = np.empty((parts.shape[0], perms.shape[0]))
    for a in range(parts.shape[0]):
        for b in range(perms.shape[0]):
            out[a, b] = sp_logpmf(parts[a], perms[b], anchor, omega, psi,
                                  bkind, bpar, btarget, logbell)
    return out


@njit(cache=True)
def lsp_logpmf_table(parts, perms, anchor, omega):
    out = np.empty((parts.shape[0], perms.shape[0]))
    for a in range(parts.shape[0]):
        for b in range(perms.shape[0]):
            out[a, b] = lsp_logpmf(parts[a], perms[b], anchor, omega)
    return out


@njit(cache=True)
def sp_sample_many(perm, anchor, omega, psi, bkind, bpar, btarget, logbell, uniforms):
    """One canonical draw per row of ``uniforms`` (shape draws x n)."""
    n = perm.shape[0]
    draws = uniforms.shape[0]
    out = np.empty((draws, n), np.int64)
    amax = 0
    for i in range(n):
        if anchor[i] > amax:
            amax = anchor[i]
    w = np.empty(n + 1)
    for d in range(draws):
        S = np.zeros((n, amax + 1))
        T = np.zeros(n)
        size = np.zeros(n)
        tmap = np.full(n + 1, -1, np.int64)
        lab = np.empty(n, np.int64)
        q = 0
        for k in range(n):
            item = perm[k]
            if k == 0:
                c = 0
            else:
                _baseline_weights(w, k, q, n, item, size, bkind, bpar, btarget, tmap, logbell)
                wk = omega[item]
                if wk != 0.0:
                    scale = wk / (k * k)
                    m = anchor[item]
                    for j in range(q):
                        w[j] += scale * (S[j, m] * S[j, m] - psi * T[j] * T[j])
                norm = _logsumexp(w, q + 1)
                u = uniforms[d, k]
                acc = 0.0
                c = q
                for j in range(q + 1):
                    acc += np.exp(w[j] - norm)
                    if u < acc:
                        c = j
                        break
                # guard against rounding leaving u above the final cumulative sum
                if c == q and w[q] == -np.inf:
                    for j in range(q, -1, -1):
                        if w[j] > -np.inf:
                            c = j
                            break
            if c == q:
                q += 1
            if bkind == FIXED and tmap[btarget[item]] < 0:
                tmap[btarget[item]] = c
            lab[item] = c
            size[c] += 1.0
            S[c, anchor[item]] += omega[item]
            T[c] += omega[item]
        # canonical relabel by first appearance in item order
        remap = np.full(n, -1, np.int64)
        nxt = 1
        for i in range(n):
            if remap[lab[i]] < 0:
                remap[lab[i]] = nxt
                nxt += 1
            out[d, i] = remap[lab[i]]
    return out


@njit(cache=True)
def _log_ml(xtx, xtr, rtr, m, tau, lb, lb_mu, mu_lb_mu, logdet_lb):
    """Log marginal likelihood of a cluster with its coefficients integrated out."""
    if m == 0.0:
        return 0.0
    p = xtr.shape[0]
    prec = lb + tau * xtx
    b = lb_mu + tau * xtr
    chol = np.linalg.cholesky(prec)
    logdet = 0.0
    for r in range(p):
        logdet += 2.0 * np.log(chol[r, r])
    # forward substitution: chol z = b
    z = np.empty(p)
    for r in range(p):
        acc = b[r]
        for s in range(r):
            acc -= chol[r, s] * z[s]
        z[r] = acc / chol[r, r]
    quad = 0.0
    for r in range(p):
        quad += z[r] * z[r]
    return (0.5 * m * np.log(tau / (2.0 * np.pi)) + 0.5 * logdet_lb - 0.5 * logdet
            - 0.5 * (tau * rtr + mu_lb_mu - quad))


@njit(cache=True)
def label_sweep(labels, perm, lkind, lanchor, lomega, lpsi, lscal,
                lbkind, lbpar, lbtarget,
                has_right, rlabels, rperm, romega, rpsi, rbkind, rbpar, rbtarget,
                logbell, use_lik, uxtx, uxtr, urtr, um, tau,
                lb, lb_mu, mu_lb_mu, logdet_lb, uniforms):
    """Collapsed Gibbs sweep over items 0..n-1 for one partition.

    The prior factor for each candidate is the full pmf of the left term
    (this partition given its anchor) plus, when ``has_right``, the pmf of
    the next partition with this one as its anchor.  Labels are slot ids in
    0..n-1 and are modified in place.
    """
    n = labels.shape[0]
    p = uxtr.shape[1]
    cxtx = np.zeros((n, p, p))
    cxtr = np.zeros((n, p))
    crtr = np.zeros(n)
    cm = np.zeros(n)
    csize = np.zeros(n, np.int64)
    cml = np.zeros(n)
    for i in range(n):
        c = labels[i]
        csize[c] += 1
        if use_lik:
            cxtx[c] += uxtx[i]
            cxtr[c] += uxtr[i]
            crtr[c] += urtr[i]
            cm[c] += um[i]
    if use_lik:
        for c in range(n):
            if csize[c] > 0:
                cml[c] = _log_ml(cxtx[c], cxtr[c], crtr[c], cm[c], tau,
                                 lb, lb_mu, mu_lb_mu, logdet_lb)
    cand = np.empty(n + 1, np.int64)
    w = np.empty(n + 1)
    for i in range(n):
        old = labels[i]
        csize[old] -= 1
        if use_lik:
            cxtx[old] -= uxtx[i]
            cxtr[old] -= uxtr[i]
            crtr[old] -= urtr[i]
            cm[old] -= um[i]
            if csize[old] > 0:
                cml[old] = _log_ml(cxtx[old], cxtr[old], crtr[old], cm[old], tau,
                                   lb, lb_mu, mu_lb_mu, logdet_lb)
            else:
                cml[old] = 0.0
        ncand = 0
        empty = -1
        if csize[old] == 0:
            empty = old
        for c in range(n):
            if csize[c] > 0:
                cand[ncand] = c
                ncand += 1
            elif empty < 0:
                empty = c
        cand[ncand] = empty
        ncand += 1
        for r in range(ncand):
            c = cand[r]
            labels[i] = c
            lp = prior_logp(lkind, labels, perm, lanchor, lomega, lpsi, lscal,
                            lbkind, lbpar, lbtarget, logbell)
            if has_right and lp > -np.inf:
                lp += sp_logpmf(rlabels, rperm, labels, romega, rpsi,
                                rbkind, rbpar, rbtarget, logbell)
            if use_lik and lp > -np.inf:
                with_i = _log_ml(cxtx[c] + uxtx[i], cxtr[c] + uxtr[i], crtr[c] + urtr[i],
                                 cm[c] + um[i], tau, lb, lb_mu, mu_lb_mu, logdet_lb)
                lp += with_i - cml[c]
            w[r] = lp
        norm = _logsumexp(w, ncand)
        u = uniforms[i]
        acc = 0.0
        pick = -1
        for r in range(ncand):
            if w[r] == -np.inf:
                continue
            acc += np.exp(w[r] - norm)
            pick = r
            if u < acc:
                break
        c = old if pick < 0 else cand[pick]
        labels[i] = c
        csize[c] += 1
        if use_lik:
            cxtx[c] += uxtx[i]
            cxtr[c] += uxtr[i]
            crtr[c] += urtr[i]
            cm[c] += um[i]
            cml[c] = _log_ml(cxtx[c], cxtr[c], crtr[c], cm[c], tau,
                             lb, lb_mu, mu_lb_mu, logdet_lb)


@njit(cache=True)
def permutation_mh(labels, perm, kind, anchor, omega, psi, scal,
                   bkind, bpar, btarget, logbell, blocks, shuffles, log_u):
    """Block-shuffle Metropolis moves on ``perm`` (modified in place).

    Row a of ``blocks`` holds the positions to disturb and row a of
    ``shuffles`` the order in which their items are reinserted.
    Returns the number of accepted moves.
    """
    current = prior_logp(kind, labels, perm, anchor, omega, psi, scal,
                         bkind, bpar, btarget, logbell)
    prop = perm.copy()
    b = blocks.shape[1]
    moved = np.empty(b, np.int64)
    accepted = 0
    for a in range(blocks.shape[0]):
        for r in range(b):
            moved[r] = perm[blocks[a, shuffles[a, r]]]
        for r in range(b):
            prop[blocks[a, r]] = moved[r]
        cand = prior_logp(kind, labels, prop, anchor, omega, psi, scal,
                          bkind, bpar, btarget, logbell)
        if log_u[a] < cand - current:
            for r in range(b):
                perm[blocks[a, r]] = prop[blocks[a, r]]
            current = cand
            accepted += 1
        else:
            for r in range(b):
                prop[blocks[a, r]] = perm[blocks[a, r]]
    return accepted


@njit(cache=True)
def path_update(labels, perms, omegas, psi, bkind, bpar, btarget,
                ibkind, ibpar, ibtarget, logbell, use_lik, uxtx, uxtr, urtr, um, taus,
                lb, lb_mu, mu_lb_mu, logdet_lb, uniforms):
    """Joint Gibbs draw of each item's labels at all time points of a chain
    of partitions (``labels`` is (T, n), modified in place).

    With the other items held fixed, the item's labels form a hidden Markov
    chain: unary factors are the collapsed likelihood gains (plus the
    initial prior at t = 0), pairwise factors the SP pmf of partition t
    given partition t - 1.  Forward filtering and backward sampling draw
    the whole path exactly.  ``omegas[t]`` is the shrinkage for step t.
    """
    T, n = labels.shape
    p = uxtr.shape[2]
    cand = np.empty((T, n + 1), np.int64)
    ncand = np.empty(T, np.int64)
    unary = np.empty((T, n + 1))
    pair = np.empty((T, n + 1, n + 1))
    alpha = np.empty((T, n + 1))
    w = np.empty(n + 1)
    occupied = np.zeros(n, np.bool_)
    cxtx = np.zeros((n, p, p))
    cxtr = np.zeros((n, p))
    crtr = np.zeros(n)
    cm = np.zeros(n)
    zero = np.zeros(n)
    for i in range(n):
        for t in range(T):
            occupied[:] = False
            for j in range(n):
                if j != i:
                    occupied[labels[t, j]] = True
            m = 0
            empty = -1
            for c in range(n):
                if occupied[c]:
                    cand[t, m] = c
                    m += 1
                elif empty < 0:
                    empty = c
            cand[t, m] = empty
            ncand[t] = m + 1
            if use_lik:
                cxtx[:] = 0.0
                cxtr[:] = 0.0
                crtr[:] = 0.0
                cm[:] = 0.0
                for j in range(n):
                    if j != i:
                        c = labels[t, j]
                        cxtx[c] += uxtx[t, j]
                        cxtr[c] += uxtr[t, j]
                        crtr[c] += urtr[t, j]
                        cm[c] += um[t, j]
                for r in range(ncand[t]):
                    c = cand[t, r]
                    with_i = _log_ml(cxtx[c] + uxtx[t, i], cxtr[c] + uxtr[t, i],
                                     crtr[c] + urtr[t, i], cm[c] + um[t, i], taus[t],
                                     lb, lb_mu, mu_lb_mu, logdet_lb)
                    without = _log_ml(cxtx[c], cxtr[c], crtr[c], cm[c], taus[t],
                                      lb, lb_mu, mu_lb_mu, logdet_lb)
                    unary[t, r] = with_i - without
            else:
                for r in range(ncand[t]):
                    unary[t, r] = 0.0
        for r in range(ncand[0]):
            labels[0, i] = cand[0, r]
            unary[0, r] += sp_logpmf(labels[0], perms[0], labels[0], zero, 0.0,
                                     ibkind, ibpar, ibtarget, logbell)
        for t in range(1, T):
            for r in range(ncand[t - 1]):
                labels[t - 1, i] = cand[t - 1, r]
                for s in range(ncand[t]):
                    labels[t, i] = cand[t, s]
                    pair[t, r, s] = sp_logpmf(labels[t], perms[t], labels[t - 1], omegas[t],
                                              psi, bkind, bpar, btarget, logbell)
        for r in range(ncand[0]):
            alpha[0, r] = unary[0, r]
        for t in range(1, T):
            for s in range(ncand[t]):
                for r in range(ncand[t - 1]):
                    w[r] = alpha[t - 1, r] + pair[t, r, s]
                alpha[t, s] = unary[t, s] + _logsumexp(w, ncand[t - 1])
        s = -1
        for t in range(T - 1, -1, -1):
            m = ncand[t]
            for r in range(m):
                w[r] = alpha[t, r]
                if t < T - 1:
                    w[r] += pair[t + 1, r, s]
            norm = _logsumexp(w, m)
            acc = 0.0
            pick = -1
            for r in range(m):
                if w[r] == -np.inf:
                    continue
                acc += np.exp(w[r] - norm)
                pick = r
                if uniforms[i, t] < acc:
                    break
            s = pick
            labels[t, i] = cand[t, s]
