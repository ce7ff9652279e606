"""Pure numpy twin of ``_kernels.pyx``; selected when the extension is absent."""
import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lstm_forward(XW, U, h0, c0):
    B, T, G4 = XW.shape
    H = G4 // 4
    if U.shape != (G4, H) or G4 != 4 * H:
        raise ValueError("recurrent weights do not match the input projection")
    if h0.shape != (B, H) or c0.shape != (B, H):
        raise ValueError("initial state shape mismatch")
    hs = np.empty((B, T, H))
    cs = np.empty((B, T, H))
    gs = np.empty((B, T, G4))
    h, c = h0, c0
    for t in range(T):
        pre = XW[:, t] + h @ U.T
        ig = _sigmoid(pre[:, :H])
        fg = _sigmoid(pre[:, H:2 * H])
        gg = np.tanh(pre[:, 2 * H:3 * H])
        og = _sigmoid(pre[:, 3 * H:])
        c = fg * c + ig * gg
        h = og * np.tanh(c)
        hs[:, t] = h
        cs[:, t] = c
        gs[:, t] = np.concatenate([ig, fg, gg, og], axis=1)
    return hs, cs, gs


def lstm_backward(U, c0, Cs, Gs, dHs, dcT):
    B, T, G4 = Gs.shape
    H = G4 // 4
    if dHs.shape != (B, T, H):
        raise ValueError("dHs shape mismatch")
    if dcT.shape != (B, H):
        raise ValueError("dcT shape mismatch")
    dpre = np.empty((B, T, G4))
    dh_next = np.zeros((B, H))
    dc_next = np.array(dcT, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        ig, fg, gg, og = (Gs[:, t, k * H:(k + 1) * H] for k in range(4))
        cprev = c0 if t == 0 else Cs[:, t - 1]
        tc = np.tanh(Cs[:, t])
        dh = dHs[:, t] + dh_next
        dc = dc_next + dh * og * (1.0 - tc * tc)
        dp = dpre[:, t]
        dp[:, :H] = dc * gg * ig * (1.0 - ig)
        dp[:, H:2 * H] = dc * cprev * fg * (1.0 - fg)
        dp[:, 2 * H:3 * H] = dc * ig * (1.0 - gg * gg)
        dp[:, 3 * H:] = dh * tc * og * (1.0 - og)
        dc_next = dc * fg
        dh_next = dp @ U
    return dpre, dh_next, dc_next


def svr_smo(K, y, C, epsilon, tol, max_iter):
    n = K.shape[0]
    if K.shape[1] != n or y.shape[0] != n:
        raise ValueError("kernel/target shape mismatch")
    y = np.asarray(y, dtype=np.float64)
    sg = np.concatenate([np.ones(n), -np.ones(n)])
    idx = np.concatenate([np.arange(n), np.arange(n)])
    alpha = np.zeros(2 * n)
    G = np.concatenate([epsilon - y, epsilon + y])
    diag = np.diag(K)[idx]
    it = 0
    while it < max_iter:
        up = np.where(sg > 0, alpha < C, alpha > 0.0)
        low = np.where(sg > 0, alpha > 0.0, alpha < C)
        if not up.any():
            break
        score = -sg * G
        # ties resolve to the last index, matching the compiled loop's >=
        cand = np.flatnonzero(up)
        vals = score[cand]
        i = int(cand[len(vals) - 1 - np.argmax(vals[::-1])])
        gmax = score[i]
        ki = idx[i]
        if not low.any():
            break
        sgG = sg * G
        gmax2 = float(np.max(sgG[low]))
        gd = gmax + sgG
        quad = diag[i] + diag - 2.0 * K[ki, idx]
        quad = np.where(quad <= 0.0, 1e-12, quad)
        ok = low & (gd > 0.0)
        if gmax + gmax2 < tol or not ok.any():
            break
        od = np.where(ok, -(gd * gd) / quad, np.inf)
        cj = np.flatnonzero(od == od.min())
        j = int(cj[-1])
        kj = idx[j]
        yi, yj = sg[i], sg[j]
        oi, oj = alpha[i], alpha[j]
        q = K[ki, ki] + K[kj, kj] - 2.0 * K[ki, kj]
        q = 1e-12 if q <= 0.0 else q
        ai, aj = oi, oj
        if yi != yj:
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0.0:
                if aj < 0.0:
                    aj, ai = 0.0, diff
            elif ai < 0.0:
                ai, aj = 0.0, -diff
            if diff > 0.0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / q
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0.0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0.0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += sg * (yi * K[ki, idx] * (ai - oi) + yj * K[kj, idx] * (aj - oj))
        it += 1
    yG = sg * G
    at_up = alpha >= C
    at_low = alpha <= 0.0
    free = ~at_up & ~at_low
    if free.any():
        rho = float(np.mean(yG[free]))
    else:
        ub_mask = (at_up & (sg < 0)) | (at_low & (sg > 0))
        lb_mask = (at_up & (sg > 0)) | (at_low & (sg < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float(0.5 * (ub + lb))
    return alpha[:n] - alpha[n:], rho, it
