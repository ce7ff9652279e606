# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: LSTM recurrence (forward and BPTT) and the SVR dual solver.

Only the sequential part of the LSTM lives here; input projections and
parameter gradients are plain matrix products done by the caller.
"""
import numpy as np

from libc.math cimport exp, fabs
from libc.math cimport fmin as min, fmax as max


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _tanh(double x) noexcept nogil:
    # one exp instead of libm tanh; absolute error stays near machine epsilon
    cdef double e = exp(-2.0 * fabs(x))
    cdef double r = (1.0 - e) / (1.0 + e)
    return r if x >= 0.0 else -r


def lstm_forward(const double[:, :, ::1] XW, const double[:, ::1] U,
                 const double[:, ::1] h0, const double[:, ::1] c0):
    """Run the LSTM recurrence given input projections ``XW`` = X W' + b, (B, T, 4H).

    Returns hidden states, cell states and post-activation gates
    (B, T, 4H) in the order input, forget, candidate, output.
    """
    cdef Py_ssize_t B = XW.shape[0], T = XW.shape[1], G4 = XW.shape[2]
    cdef Py_ssize_t H = G4 // 4
    if U.shape[0] != G4 or U.shape[1] != H or G4 != 4 * H:
        raise ValueError("recurrent weights do not match the input projection")
    if h0.shape[0] != B or h0.shape[1] != H or c0.shape[0] != B or c0.shape[1] != H:
        raise ValueError("initial state shape mismatch")

    hs_arr = np.empty((B, T, H))
    cs_arr = np.empty((B, T, H))
    gs_arr = np.empty((B, T, G4))
    UT_arr = np.ascontiguousarray(np.asarray(U).T)
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] gs = gs_arr
    cdef double[:, ::1] UT = UT_arr
    cdef Py_ssize_t bb, t, r, j, k
    cdef double ig, fg, gg, og, c, v
    cdef const double* hp
    cdef const double* cp
    cdef const double* xw
    cdef const double* row
    cdef double* pre
    cdef double* hout
    cdef double* cout

    with nogil:
        for bb in range(B):
            for t in range(T):
                xw = &XW[bb, t, 0]
                if t == 0:
                    hp = &h0[bb, 0]
                    cp = &c0[bb, 0]
                else:
                    hp = &hs[bb, t - 1, 0]
                    cp = &cs[bb, t - 1, 0]
                # pre-activations accumulate in place, then become gate values
                pre = &gs[bb, t, 0]
                for r in range(G4):
                    pre[r] = xw[r]
                for j in range(H):
                    v = hp[j]
                    row = &UT[j, 0]
                    for r in range(G4):
                        pre[r] += row[r] * v
                hout = &hs[bb, t, 0]
                cout = &cs[bb, t, 0]
                for k in range(H):
                    ig = _sigmoid(pre[k])
                    fg = _sigmoid(pre[H + k])
                    gg = _tanh(pre[2 * H + k])
                    og = _sigmoid(pre[3 * H + k])
                    c = fg * cp[k] + ig * gg
                    cout[k] = c
                    hout[k] = og * _tanh(c)
                    pre[k] = ig
                    pre[H + k] = fg
                    pre[2 * H + k] = gg
                    pre[3 * H + k] = og
    return hs_arr, cs_arr, gs_arr


def lstm_backward(const double[:, ::1] U, const double[:, ::1] c0,
                  const double[:, :, ::1] Cs, const double[:, :, ::1] Gs,
                  const double[:, :, ::1] dHs, const double[:, ::1] dcT):
    """Backpropagation through time for :func:`lstm_forward`.

    ``dHs`` holds the loss gradient w.r.t. every hidden state and ``dcT`` the
    gradient arriving at the last cell state. Returns the
    gradient w.r.t. the gate pre-activations (B, T, 4H) plus (dh0, dc0);
    parameter and input gradients follow from it by matrix products.
    """
    cdef Py_ssize_t B = Gs.shape[0], T = Gs.shape[1], G4 = Gs.shape[2]
    cdef Py_ssize_t H = G4 // 4
    if dHs.shape[0] != B or dHs.shape[1] != T or dHs.shape[2] != H:
        raise ValueError("dHs shape mismatch")
    if U.shape[0] != G4 or U.shape[1] != H:
        raise ValueError("recurrent weights do not match the gates")
    if dcT.shape[0] != B or dcT.shape[1] != H:
        raise ValueError("dcT shape mismatch")

    dpre_arr = np.empty((B, T, G4))
    dh0_arr = np.zeros((B, H))
    dc0_arr = np.zeros((B, H))
    buf_arr = np.zeros(2 * H)
    cdef double[:, :, ::1] dpre_v = dpre_arr
    cdef double[:, ::1] dh0 = dh0_arr
    cdef double[:, ::1] dc0 = dc0_arr
    cdef double[::1] buf = buf_arr
    cdef double* dh_next = &buf[0]
    cdef double* dc_next = &buf[H]
    cdef Py_ssize_t bb, t, r, j, k
    cdef double dh, dc, tc, ig, fg, gg, og, d
    cdef const double* cp
    cdef const double* g
    cdef const double* urow
    cdef double* dpre

    with nogil:
        for bb in range(B):
            for k in range(H):
                dh_next[k] = 0.0
                dc_next[k] = dcT[bb, k]
            for t in range(T - 1, -1, -1):
                g = &Gs[bb, t, 0]
                dpre = &dpre_v[bb, t, 0]
                if t == 0:
                    cp = &c0[bb, 0]
                else:
                    cp = &Cs[bb, t - 1, 0]
                for k in range(H):
                    ig = g[k]
                    fg = g[H + k]
                    gg = g[2 * H + k]
                    og = g[3 * H + k]
                    tc = _tanh(Cs[bb, t, k])
                    dh = dHs[bb, t, k] + dh_next[k]
                    dc = dc_next[k] + dh * og * (1.0 - tc * tc)
                    dpre[k] = dc * gg * ig * (1.0 - ig)
                    dpre[H + k] = dc * cp[k] * fg * (1.0 - fg)
                    dpre[2 * H + k] = dc * ig * (1.0 - gg * gg)
                    dpre[3 * H + k] = dh * tc * og * (1.0 - og)
                    dc_next[k] = dc * fg
                    dh_next[k] = 0.0
                # dh_prev = U' dpre, rows ascending
                for r in range(G4):
                    d = dpre[r]
                    urow = &U[r, 0]
                    for j in range(H):
                        dh_next[j] += d * urow[j]
            for k in range(H):
                dh0[bb, k] = dh_next[k]
                dc0[bb, k] = dc_next[k]
    return dpre_arr, dh0_arr, dc0_arr


cdef inline bint _is_upper(double a, double C) noexcept nogil:
    return a >= C


cdef inline bint _is_lower(double a) noexcept nogil:
    return a <= 0.0


def svr_smo(const double[:, ::1] K, const double[::1] y, double C, double epsilon,
            double tol, long max_iter):
    """SMO with second-order working-set selection for the epsilon-SVR dual.

    Variables a (first n, sign +1) and a* (last n, sign -1), 0 <= a <= C,
    sum(a) = sum(a*). Returns (a - a*, rho, iterations); the regression
    function is f(x) = sum_i (a - a*)_i k(x_i, x) - rho.
    """
    cdef Py_ssize_t n = K.shape[0]
    if K.shape[1] != n or y.shape[0] != n:
        raise ValueError("kernel/target shape mismatch")
    cdef Py_ssize_t m = 2 * n
    alpha_arr = np.zeros(m)
    grad_arr = np.empty(m)
    sign_arr = np.empty(m)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = grad_arr
    cdef double[::1] sg = sign_arr
    cdef Py_ssize_t t, i, j, ki, kj, kt
    for t in range(n):
        sg[t] = 1.0
        sg[t + n] = -1.0
        G[t] = epsilon - y[t]
        G[t + n] = epsilon + y[t]
    cdef long it = 0
    cdef double gmax, gmax2, gd, quad, od, odmin, delta, diff, total, oi, oj, di, dj
    cdef double yi, yj, r, ub, lb, sum_free, yG
    cdef long nfree
    with nogil:
        while it < max_iter:
            gmax = -1e300
            i = -1
            for t in range(m):
                if sg[t] > 0:
                    if not _is_upper(alpha[t], C) and -G[t] >= gmax:
                        gmax = -G[t]
                        i = t
                else:
                    if not _is_lower(alpha[t]) and G[t] >= gmax:
                        gmax = G[t]
                        i = t
            if i < 0:
                break
            ki = i % n
            yi = sg[i]
            gmax2 = -1e300
            j = -1
            odmin = 1e300
            for t in range(m):
                kt = t % n
                if sg[t] > 0:
                    if _is_lower(alpha[t]):
                        continue
                    gd = gmax + G[t]
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                else:
                    if _is_upper(alpha[t], C):
                        continue
                    gd = gmax - G[t]
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                if gd > 0.0:
                    quad = K[ki, ki] + K[kt, kt] - 2.0 * K[ki, kt]
                    if quad <= 0.0:
                        quad = 1e-12
                    od = -(gd * gd) / quad
                    if od <= odmin:
                        odmin = od
                        j = t
            if gmax + gmax2 < tol or j < 0:
                break
            kj = j % n
            yj = sg[j]
            oi = alpha[i]
            oj = alpha[j]
            quad = K[ki, ki] + K[kj, kj] - 2.0 * K[ki, kj]
            if quad <= 0.0:
                quad = 1e-12
            if yi != yj:
                delta = (-G[i] - G[j]) / quad
                diff = alpha[i] - alpha[j]
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0.0:
                    if alpha[j] < 0.0:
                        alpha[j] = 0.0
                        alpha[i] = diff
                else:
                    if alpha[i] < 0.0:
                        alpha[i] = 0.0
                        alpha[j] = -diff
                if diff > 0.0:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = C - diff
                else:
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = C + diff
            else:
                delta = (G[i] - G[j]) / quad
                total = alpha[i] + alpha[j]
                alpha[i] -= delta
                alpha[j] += delta
                if total > C:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = total - C
                else:
                    if alpha[j] < 0.0:
                        alpha[j] = 0.0
                        alpha[i] = total
                if total > C:
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = total - C
                else:
                    if alpha[i] < 0.0:
                        alpha[i] = 0.0
                        alpha[j] = total
            di = alpha[i] - oi
            dj = alpha[j] - oj
            # Q[s, t] = sign_s * sign_t * K[s % n, t % n]
            for t in range(m):
                kt = t % n
                G[t] += sg[t] * (yi * K[ki, kt] * di + yj * K[kj, kt] * dj)
            it += 1

        ub = 1e300
        lb = -1e300
        sum_free = 0.0
        nfree = 0
        for t in range(m):
            yG = sg[t] * G[t]
            if _is_upper(alpha[t], C):
                if sg[t] < 0:
                    ub = min(ub, yG)
                else:
                    lb = max(lb, yG)
            elif _is_lower(alpha[t]):
                if sg[t] > 0:
                    ub = min(ub, yG)
                else:
                    lb = max(lb, yG)
            else:
                nfree += 1
                sum_free += yG
        if nfree > 0:
            r = sum_free / nfree
        else:
            r = 0.5 * (ub + lb)
    coef = alpha_arr[:n] - alpha_arr[n:]
    return coef, r, it
