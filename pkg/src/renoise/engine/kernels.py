"""Numba-compiled inner loops for the layer vocabulary.

All kernels are serial and IEEE-strict (fastmath off), so results are
bit-reproducible run to run. Convolution uses a direct cache-blocked scheme:
on a single core it outperforms im2col+BLAS because it never materialises
the column matrix. The 3x3 path is unrolled; the generic path handles any
odd kernel size.

Array contracts: float64, C-contiguous. ``xp`` arguments are zero-padded
inputs of shape (N, C, H + k - 1, W + k - 1); outputs are (N, CO, H, W).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def conv_forward_k3(xp, w, bias, out):
    # Two output channels per sweep share the input-row loads; the tap sum
    # is tree-shaped so consecutive FMAs are independent.
    n_im, c_in, hp, wp = xp.shape
    c_out = w.shape[0]
    h = hp - 2
    wd = wp - 2
    acc0 = np.empty(wd)
    acc1 = np.empty(wd)
    for n in range(n_im):
        for co in range(0, c_out - 1, 2):
            for i in range(h):
                ba = bias[co]
                bb = bias[co + 1]
                for j in range(wd):
                    acc0[j] = ba
                    acc1[j] = bb
                for c in range(c_in):
                    x0 = xp[n, c, i]
                    x1 = xp[n, c, i + 1]
                    x2 = xp[n, c, i + 2]
                    u00 = w[co, c, 0, 0]
                    u01 = w[co, c, 0, 1]
                    u02 = w[co, c, 0, 2]
                    u10 = w[co, c, 1, 0]
                    u11 = w[co, c, 1, 1]
                    u12 = w[co, c, 1, 2]
                    u20 = w[co, c, 2, 0]
                    u21 = w[co, c, 2, 1]
                    u22 = w[co, c, 2, 2]
                    v00 = w[co + 1, c, 0, 0]
                    v01 = w[co + 1, c, 0, 1]
                    v02 = w[co + 1, c, 0, 2]
                    v10 = w[co + 1, c, 1, 0]
                    v11 = w[co + 1, c, 1, 1]
                    v12 = w[co + 1, c, 1, 2]
                    v20 = w[co + 1, c, 2, 0]
                    v21 = w[co + 1, c, 2, 1]
                    v22 = w[co + 1, c, 2, 2]
                    for j in range(wd):
                        p0 = x0[j]
                        p1 = x0[j + 1]
                        p2 = x0[j + 2]
                        q0 = x1[j]
                        q1 = x1[j + 1]
                        q2 = x1[j + 2]
                        r0 = x2[j]
                        r1 = x2[j + 1]
                        r2 = x2[j + 2]
                        ta = (u00 * p0 + u01 * p1) + (u02 * p2 + u10 * q0)
                        tb = (u11 * q1 + u12 * q2) + (u20 * r0 + u21 * r1)
                        acc0[j] += (ta + tb) + u22 * r2
                        sa = (v00 * p0 + v01 * p1) + (v02 * p2 + v10 * q0)
                        sb = (v11 * q1 + v12 * q2) + (v20 * r0 + v21 * r1)
                        acc1[j] += (sa + sb) + v22 * r2
                for j in range(wd):
                    out[n, co, i, j] = acc0[j]
                    out[n, co + 1, i, j] = acc1[j]
        if c_out % 2 == 1:
            co = c_out - 1
            for i in range(h):
                b0 = bias[co]
                for j in range(wd):
                    acc0[j] = b0
                for c in range(c_in):
                    x0 = xp[n, c, i]
                    x1 = xp[n, c, i + 1]
                    x2 = xp[n, c, i + 2]
                    u00 = w[co, c, 0, 0]
                    u01 = w[co, c, 0, 1]
                    u02 = w[co, c, 0, 2]
                    u10 = w[co, c, 1, 0]
                    u11 = w[co, c, 1, 1]
                    u12 = w[co, c, 1, 2]
                    u20 = w[co, c, 2, 0]
                    u21 = w[co, c, 2, 1]
                    u22 = w[co, c, 2, 2]
                    for j in range(wd):
                        ta = (u00 * x0[j] + u01 * x0[j + 1]) + (u02 * x0[j + 2] + u10 * x1[j])
                        tb = (u11 * x1[j + 1] + u12 * x1[j + 2]) + (u20 * x2[j] + u21 * x2[j + 1])
                        acc0[j] += (ta + tb) + u22 * x2[j + 2]
                for j in range(wd):
                    out[n, co, i, j] = acc0[j]
    return out


@njit(cache=True)
def conv_forward_generic(xp, w, bias, out):
    n_im, c_in, hp, wp = xp.shape
    c_out, _, kh, kw = w.shape
    h = hp - kh + 1
    wd = wp - kw + 1
    acc = np.empty(wd)
    for n in range(n_im):
        for co in range(c_out):
            for i in range(h):
                b0 = bias[co]
                for j in range(wd):
                    acc[j] = b0
                for c in range(c_in):
                    for a in range(kh):
                        xr = xp[n, c, i + a]
                        for b in range(kw):
                            wv = w[co, c, a, b]
                            for j in range(wd):
                                acc[j] += wv * xr[j + b]
                for j in range(wd):
                    out[n, co, i, j] = acc[j]
    return out


@njit(cache=True)
def _lane_sum(row):
    s = 0.0
    for j in range(row.size):
        s += row[j]
    return s


@njit(cache=True)
def conv_grad_weights_k3(xp, gout, wgrad):
    # wgrad[co, c, a, b] = sum_{n,i,j} gout[n, co, i, j] * xp[n, c, i+a, j+b]
    # Nine standalone accumulator lanes over j keep the inner loop SIMD
    # without reassociating any reduction (standalone so LLVM can prove
    # they do not alias).
    n_im, c_in, hp, wp = xp.shape
    c_out = gout.shape[1]
    h = hp - 2
    wd = wp - 2
    wgrad[:] = 0.0
    a00 = np.empty(wd)
    a01 = np.empty(wd)
    a02 = np.empty(wd)
    a10 = np.empty(wd)
    a11 = np.empty(wd)
    a12 = np.empty(wd)
    a20 = np.empty(wd)
    a21 = np.empty(wd)
    a22 = np.empty(wd)
    for n in range(n_im):
        for co in range(c_out):
            for c in range(c_in):
                for j in range(wd):
                    a00[j] = 0.0
                    a01[j] = 0.0
                    a02[j] = 0.0
                    a10[j] = 0.0
                    a11[j] = 0.0
                    a12[j] = 0.0
                    a20[j] = 0.0
                    a21[j] = 0.0
                    a22[j] = 0.0
                for i in range(h):
                    g = gout[n, co, i]
                    x0 = xp[n, c, i]
                    x1 = xp[n, c, i + 1]
                    x2 = xp[n, c, i + 2]
                    for j in range(wd):
                        gv = g[j]
                        a00[j] += gv * x0[j]
                        a01[j] += gv * x0[j + 1]
                        a02[j] += gv * x0[j + 2]
                        a10[j] += gv * x1[j]
                        a11[j] += gv * x1[j + 1]
                        a12[j] += gv * x1[j + 2]
                        a20[j] += gv * x2[j]
                        a21[j] += gv * x2[j + 1]
                        a22[j] += gv * x2[j + 2]
                wgrad[co, c, 0, 0] += _lane_sum(a00)
                wgrad[co, c, 0, 1] += _lane_sum(a01)
                wgrad[co, c, 0, 2] += _lane_sum(a02)
                wgrad[co, c, 1, 0] += _lane_sum(a10)
                wgrad[co, c, 1, 1] += _lane_sum(a11)
                wgrad[co, c, 1, 2] += _lane_sum(a12)
                wgrad[co, c, 2, 0] += _lane_sum(a20)
                wgrad[co, c, 2, 1] += _lane_sum(a21)
                wgrad[co, c, 2, 2] += _lane_sum(a22)
    return wgrad


@njit(cache=True)
def conv_grad_weights_generic(xp, gout, wgrad):
    n_im, c_in, hp, wp = xp.shape
    c_out = gout.shape[1]
    kh = wgrad.shape[2]
    kw = wgrad.shape[3]
    h = hp - kh + 1
    wd = wp - kw + 1
    wgrad[:] = 0.0
    acc = np.empty(wd)
    for n in range(n_im):
        for co in range(c_out):
            for c in range(c_in):
                for a in range(kh):
                    for b in range(kw):
                        for j in range(wd):
                            acc[j] = 0.0
                        for i in range(h):
                            g = gout[n, co, i]
                            xr = xp[n, c, i + a]
                            for j in range(wd):
                                acc[j] += g[j] * xr[j + b]
                        s = 0.0
                        for j in range(wd):
                            s += acc[j]
                        wgrad[co, c, a, b] += s
    return wgrad


@njit(cache=True)
def bn_stats(x):
    # per-channel mean and biased variance over (N, H, W)
    n_im, c_in, h, wd = x.shape
    mean = np.zeros(c_in)
    var = np.zeros(c_in)
    m = n_im * h * wd
    for c in range(c_in):
        s = 0.0
        for n in range(n_im):
            for i in range(h):
                xr = x[n, c, i]
                for j in range(wd):
                    s += xr[j]
        mu = s / m
        q = 0.0
        for n in range(n_im):
            for i in range(h):
                xr = x[n, c, i]
                for j in range(wd):
                    d = xr[j] - mu
                    q += d * d
        mean[c] = mu
        var[c] = q / m
    return mean, var


@njit(cache=True)
def bn_normalize(x, mean, istd, gamma, beta, xhat, out):
    n_im, c_in, h, wd = x.shape
    for n in range(n_im):
        for c in range(c_in):
            mu = mean[c]
            s = istd[c]
            g = gamma[c]
            bt = beta[c]
            for i in range(h):
                xr = x[n, c, i]
                hr = xhat[n, c, i]
                orow = out[n, c, i]
                for j in range(wd):
                    v = (xr[j] - mu) * s
                    hr[j] = v
                    orow[j] = g * v + bt
    return out


@njit(cache=True)
def bn_backward(gout, xhat, gamma, istd, gin, dgamma, dbeta):
    n_im, c_in, h, wd = gout.shape
    m = n_im * h * wd
    for c in range(c_in):
        sg = 0.0
        sgx = 0.0
        for n in range(n_im):
            for i in range(h):
                gr = gout[n, c, i]
                hr = xhat[n, c, i]
                for j in range(wd):
                    sg += gr[j]
                    sgx += gr[j] * hr[j]
        dgamma[c] = sgx
        dbeta[c] = sg
        k = gamma[c] * istd[c] / m
        for n in range(n_im):
            for i in range(h):
                gr = gout[n, c, i]
                hr = xhat[n, c, i]
                qr = gin[n, c, i]
                for j in range(wd):
                    qr[j] = k * (m * gr[j] - sg - hr[j] * sgx)
    return gin


@njit(cache=True)
def relu_forward(x, out):
    flat_x = x.reshape(-1)
    flat_o = out.reshape(-1)
    for i in range(flat_x.size):
        v = flat_x[i]
        flat_o[i] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def relu_backward(gout, saved_out, gin):
    flat_g = gout.reshape(-1)
    flat_s = saved_out.reshape(-1)
    flat_q = gin.reshape(-1)
    for i in range(flat_g.size):
        flat_q[i] = flat_g[i] if flat_s[i] > 0.0 else 0.0
    return gin
