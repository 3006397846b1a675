"""Independent reference implementations used as test oracles.

Everything here is written directly from the mathematical definitions with
plain loops, deliberately sharing no code with the package. Slow is fine.
"""

import numpy as np


def ref_conv2d(x, w, b):
    """Direct nested-loop same-padding cross-correlation, NCHW."""
    n_im, c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((n_im, c_out, h, wd))
    for n in range(n_im):
        for co in range(c_out):
            for i in range(h):
                for j in range(wd):
                    acc = b[co]
                    for c in range(c_in):
                        for a in range(kh):
                            for bb in range(kw):
                                ii = i + a - ph
                                jj = j + bb - pw
                                if 0 <= ii < h and 0 <= jj < wd:
                                    acc += w[co, c, a, bb] * x[n, c, ii, jj]
                    out[n, co, i, j] = acc
    return out


def ref_batchnorm_train(x, gamma, beta, eps):
    """Two-pass per-channel statistics, then normalize and affine."""
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        vals = x[:, c, :, :]
        mu = vals.mean()
        var = ((vals - mu) ** 2).mean()
        out[:, c, :, :] = gamma[c] * (vals - mu) / np.sqrt(var + eps) + beta[c]
    return out


def central_difference(fn, arr, idx, h=None):
    """Two-sided derivative of scalar fn() with respect to arr[idx]."""
    orig = arr[idx]
    step = h if h is not None else 1e-6 * max(1.0, abs(orig))
    arr[idx] = orig + step
    up = fn()
    arr[idx] = orig - step
    down = fn()
    arr[idx] = orig
    return (up - down) / (2.0 * step)


def rel_err(a, n, floor=1e-3):
    return abs(a - n) / max(abs(a), abs(n), floor)


def _gauss_kernel_2d(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    t = np.arange(size) - half
    g1 = np.exp(-(t * t) / (2 * sigma * sigma))
    k = np.outer(g1, g1)
    return k / k.sum()


def ref_ssim_gray(x, y, peak=255.0, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct per-window SSIM on a single channel: loop every valid window,
    compute weighted moments from the definition, average the map."""
    win = _gauss_kernel_2d(size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    h, w = x.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            px = x[i:i + size, j:j + size]
            py = y[i:i + size, j:j + size]
            mx = (win * px).sum()
            my = (win * py).sum()
            vx = (win * px * px).sum() - mx * mx
            vy = (win * py * py).sum() - my * my
            cxy = (win * px * py).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))
