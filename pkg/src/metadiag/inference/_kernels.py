"""Compiled Newton iterations for the binomial-logit latent model.

Mirrors ``laplace._newton_numpy`` for the binomial likelihood; the two are
checked against each other in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_LOG_2PI = math.log(2.0 * math.pi)
_EPS = np.finfo(np.float64).eps


@njit(cache=True)
def _softplus(e):
    if e > 0.0:
        return e + math.log1p(math.exp(-e))
    return math.log1p(math.exp(e))


@njit(cache=True)
def _expit(e):
    if e >= 0.0:
        return 1.0 / (1.0 + math.exp(-e))
    t = math.exp(e)
    return t / (1.0 + t)


@njit(cache=True)
def _terms(x, X1, X2, y1, n1, y2, n2, q11, q12, q22, tau, gf, gr, A, U, V, d11, d12, d22):
    """Fills gradient / negative-Hessian blocks in place; returns (value, grad scale)."""
    I, k = X1.shape
    value = 0.0
    scale = 0.0
    for a in range(k):
        gf[a] = -x[a] / tau
        value -= 0.5 * x[a] * x[a] / tau
        for b in range(k):
            A[a, b] = 0.0
        A[a, a] = 1.0 / tau
    for i in range(I):
        r0 = x[k + 2 * i]
        r1 = x[k + 2 * i + 1]
        e1 = r0
        e2 = r1
        for a in range(k):
            e1 += X1[i, a] * x[a]
            e2 += X2[i, a] * x[a]
        p1 = _expit(e1)
        p2 = _expit(e2)
        value += y1[i] * e1 - n1[i] * _softplus(e1) + y2[i] * e2 - n2[i] * _softplus(e2)
        g1 = y1[i] - n1[i] * p1
        g2 = y2[i] - n2[i] * p2
        w1 = n1[i] * p1 * (1.0 - p1)
        w2 = n2[i] * p2 * (1.0 - p2)
        rq0 = q11 * r0 + q12 * r1
        rq1 = q12 * r0 + q22 * r1
        value -= 0.5 * (r0 * rq0 + r1 * rq1)
        gr[i, 0] = g1 - rq0
        gr[i, 1] = g2 - rq1
        s = max(abs(y1[i]) + n1[i] * p1 + abs(q11 * r0) + abs(q12 * r1),
                abs(y2[i]) + n2[i] * p2 + abs(q12 * r0) + abs(q22 * r1))
        if s > scale:
            scale = s
        for a in range(k):
            U[i, a] = X1[i, a] * w1
            V[i, a] = X2[i, a] * w2
            gf[a] += X1[i, a] * g1 + X2[i, a] * g2
            for b in range(k):
                A[a, b] += X1[i, a] * U[i, b] + X2[i, a] * V[i, b]
        d11[i] = q11 + w1
        d12[i] = q12
        d22[i] = q22 + w2
    return value, scale


@njit(cache=True)
def _direction(gf, gr, A, U, V, d11, d12, d22, step):
    """Newton step via the Schur complement; returns (ok, log det H, S^-1)."""
    I, k = U.shape
    S = A.copy()
    rhs = gf.copy()
    logdet = 0.0
    for i in range(I):
        det = d11[i] * d22[i] - d12[i] * d12[i]
        if det <= 0.0 or d11[i] <= 0.0:
            return False, 0.0, S
        logdet += math.log(det)
        i11 = d22[i] / det
        i12 = -d12[i] / det
        i22 = d11[i] / det
        dg0 = i11 * gr[i, 0] + i12 * gr[i, 1]
        dg1 = i12 * gr[i, 0] + i22 * gr[i, 1]
        for a in range(k):
            rhs[a] -= U[i, a] * dg0 + V[i, a] * dg1
            for b in range(k):
                S[a, b] -= (U[i, a] * (i11 * U[i, b] + i12 * V[i, b])
                            + V[i, a] * (i12 * U[i, b] + i22 * V[i, b]))
    # Cholesky of the k x k Schur complement
    L = np.zeros((k, k))
    for a in range(k):
        s = S[a, a]
        for c in range(a):
            s -= L[a, c] * L[a, c]
        if s <= 0.0:
            return False, 0.0, S
        L[a, a] = math.sqrt(s)
        logdet += 2.0 * math.log(L[a, a])
        for b in range(a + 1, k):
            t = S[b, a]
            for c in range(a):
                t -= L[b, c] * L[a, c]
            L[b, a] = t / L[a, a]
    Linv = np.zeros((k, k))
    for a in range(k):
        Linv[a, a] = 1.0 / L[a, a]
        for b in range(a + 1, k):
            t = 0.0
            for c in range(a, b):
                t -= L[b, c] * Linv[c, a]
            Linv[b, a] = t / L[b, b]
    Sinv = Linv.T @ Linv
    sf = Sinv @ rhs
    for a in range(k):
        step[a] = sf[a]
    for i in range(I):
        det = d11[i] * d22[i] - d12[i] * d12[i]
        i11 = d22[i] / det
        i12 = -d12[i] / det
        i22 = d11[i] / det
        h0 = gr[i, 0]
        h1 = gr[i, 1]
        for a in range(k):
            h0 -= U[i, a] * sf[a]
            h1 -= V[i, a] * sf[a]
        step[k + 2 * i] = i11 * h0 + i12 * h1
        step[k + 2 * i + 1] = i12 * h0 + i22 * h1
    return True, logdet, Sinv


@njit(cache=True)
def newton_binomial(x0, X1, X2, y1, n1, y2, n2, log_const, q11, q12, q22, logdet_sigma, tau, tol, max_iter):
    """Returns ``(status, x, value, log det H, S^-1, iterations, grad max-norm)``.

    status: 0 converged, 1 no convergence, 2 factorisation failure, 3 line search failure.
    """
    I, k = X1.shape
    n = k + 2 * I
    x = x0.copy()
    gf = np.empty(k)
    gr = np.empty((I, 2))
    A = np.empty((k, k))
    U = np.empty((I, k))
    V = np.empty((I, k))
    d11 = np.empty(I)
    d12 = np.empty(I)
    d22 = np.empty(I)
    # scratch copies for line-search trials
    gf_t = np.empty(k)
    gr_t = np.empty((I, 2))
    A_t = np.empty((k, k))
    U_t = np.empty((I, k))
    V_t = np.empty((I, k))
    d11_t = np.empty(I)
    d12_t = np.empty(I)
    d22_t = np.empty(I)
    step = np.empty(n)
    xt = np.empty(n)
    const = log_const - I * (_LOG_2PI + 0.5 * logdet_sigma) - 0.5 * k * (_LOG_2PI + math.log(tau))

    value, scale = _terms(x, X1, X2, y1, n1, y2, n2, q11, q12, q22, tau, gf, gr, A, U, V, d11, d12, d22)
    gnorm = 0.0
    it = 0
    Sinv = np.zeros((k, k))
    logdet = 0.0
    while True:
        gnorm = 0.0
        for a in range(k):
            gnorm = max(gnorm, abs(gf[a]))
        for i in range(I):
            gnorm = max(gnorm, abs(gr[i, 0]), abs(gr[i, 1]))
        ok, logdet, Sinv = _direction(gf, gr, A, U, V, d11, d12, d22, step)
        if not ok:
            return 2, x, value + const, logdet, Sinv, it, gnorm
        # the gradient cannot be resolved below the rounding level of its terms
        if gnorm < max(tol, 1e3 * _EPS * scale):
            return 0, x, value + const, logdet, Sinv, it, gnorm
        if it >= max_iter:
            return 1, x, value + const, logdet, Sinv, it, gnorm
        t = 1.0
        accepted = False
        for _ in range(40):
            for j in range(n):
                xt[j] = x[j] + t * step[j]
            vt, st = _terms(xt, X1, X2, y1, n1, y2, n2, q11, q12, q22, tau,
                            gf_t, gr_t, A_t, U_t, V_t, d11_t, d12_t, d22_t)
            if vt >= value - 1e-10 * max(1.0, abs(value)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return 3, x, value + const, logdet, Sinv, it, gnorm
        x[:] = xt
        value = vt
        scale = st
        gf[:] = gf_t
        gr[:, :] = gr_t
        A[:, :] = A_t
        U[:, :] = U_t
        V[:, :] = V_t
        d11[:] = d11_t
        d12[:] = d12_t
        d22[:] = d22_t
        it += 1


@njit(cache=True)
def skewness_binomial(x, X1, X2, n1, n2, q11, q12, q22, tau, Sinv):
    """Compiled ``GaussianApprox.skewness_terms`` for the binomial likelihood."""
    I, k = X1.shape
    g1 = np.zeros(k)
    g3 = np.zeros(k)
    sa = np.empty(k)
    for a in range(k):
        sa[a] = math.sqrt(Sinv[a, a])
    G = np.empty((2, k))
    C = np.empty((2, k))
    for i in range(I):
        r0 = x[k + 2 * i]
        r1 = x[k + 2 * i + 1]
        e1 = r0
        e2 = r1
        for a in range(k):
            e1 += X1[i, a] * x[a]
            e2 += X2[i, a] * x[a]
        p1 = _expit(e1)
        p2 = _expit(e2)
        w1 = n1[i] * p1 * (1.0 - p1)
        w2 = n2[i] * p2 * (1.0 - p2)
        t1 = -w1 * (1.0 - 2.0 * p1)
        t2 = -w2 * (1.0 - 2.0 * p2)
        d11 = q11 + w1
        d22 = q22 + w2
        det = d11 * d22 - q12 * q12
        i11 = d22 / det
        i12 = -q12 / det
        i22 = d11 / det
        for a in range(k):
            u = X1[i, a] * w1
            v = X2[i, a] * w2
            G[0, a] = X1[i, a] - (i11 * u + i12 * v)
            G[1, a] = X2[i, a] - (i12 * u + i22 * v)
        for row in range(2):
            for a in range(k):
                s = 0.0
                for b in range(k):
                    s += G[row, b] * Sinv[b, a]
                C[row, a] = s
        v_eta0 = i11
        v_eta1 = i22
        for a in range(k):
            v_eta0 += C[0, a] * G[0, a]
            v_eta1 += C[1, a] * G[1, a]
        for a in range(k):
            c0 = C[0, a] / sa[a]
            c1 = C[1, a] / sa[a]
            g1[a] += 0.5 * ((v_eta0 - c0 * c0) * t1 * c0 + (v_eta1 - c1 * c1) * t2 * c1)
            g3[a] += t1 * c0 * c0 * c0 + t2 * c1 * c1 * c1
    return g1, g3
