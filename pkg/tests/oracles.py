"""Naive reference implementations used as independent oracles.

These deliberately use direct loop/double-sum formulations (plus plain-list
arithmetic for VIF) and stay independent of the library's vectorized paths.
"""

import math

import numpy as np


def naive_conv2d(x, k, b):
    """Direct 6-loop same-padded cross-correlation."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    pad = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, cout, h, w), dtype=np.float64)
    for ni in range(n):
        for co in range(cout):
            for ci in range(cin):
                for i in range(h):
                    for j in range(w):
                        for u in range(kh):
                            for v in range(kw):
                                out[ni, co, i, j] += (
                                    xp[ni, ci, i + u, j + v] * k[co, ci, u, v]
                                )
            out[ni, co] += b[co]
    return out


def naive_linear(x, w, b):
    """Triple-loop affine map."""
    rows, in_f = x.shape
    out_f = w.shape[0]
    out = np.zeros((rows, out_f), dtype=np.float64)
    for r in range(rows):
        for o in range(out_f):
            acc = 0.0
            for i in range(in_f):
                acc += x[r, i] * w[o, i]
            out[r, o] = acc + b[o]
    return out


def reflect101(i, n):
    if n == 1:
        return 0
    period = 2 * n - 2
    i = i % period
    return period - i if i >= n else i


def catrom(t, a=-0.5):
    t = abs(t)
    if t <= 1.0:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2.0:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def naive_bicubic(img, out_dims):
    """Per-pixel 4x4 Catmull-Rom kernel sum, half-pixel centers, reflect-101."""
    h_in, w_in = img.shape
    h_out, w_out = out_dims
    out = np.zeros(out_dims, dtype=np.float64)
    for io in range(h_out):
        sy = (io + 0.5) * h_in / h_out - 0.5
        by = int(np.floor(sy))
        for jo in range(w_out):
            sx = (jo + 0.5) * w_in / w_out - 0.5
            bx = int(np.floor(sx))
            acc = 0.0
            for ty in range(by - 1, by + 3):
                wy = catrom(sy - ty)
                for tx in range(bx - 1, bx + 3):
                    acc += wy * catrom(sx - tx) * img[reflect101(ty, h_in),
                                                      reflect101(tx, w_in)]
            out[io, jo] = acc
    return out


def naive_dft2(x):
    """O(N^2) double-sum DFT with unitary normalization."""
    h, w = x.shape
    wy = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    wx = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return (wy @ x @ wx.T) / np.sqrt(h * w)


def naive_dct2(block):
    """Double-sum orthonormal DCT-II definition."""
    n = block.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    for u in range(n):
        for v in range(n):
            acc = 0.0
            for i in range(n):
                for j in range(n):
                    acc += (block[i, j]
                            * np.cos(np.pi * (2 * i + 1) * u / (2 * n))
                            * np.cos(np.pi * (2 * j + 1) * v / (2 * n)))
            cu = np.sqrt(1 / n) if u == 0 else np.sqrt(2 / n)
            cv = np.sqrt(1 / n) if v == 0 else np.sqrt(2 / n)
            out[u, v] = cu * cv * acc
    return out


def scalar_reference_vif(dist, ref):
    """Step-by-step VIF with plain lists and loops."""

    def gauss_win(k):
        size = 2**k + 1
        std = 2 ** (k - 1) * 0.5
        half = size // 2
        g = [math.exp(-(i * i) / (2 * std * std)) for i in range(-half, half + 1)]
        win = [[gi * gj for gj in g] for gi in g]
        total = sum(sum(row) for row in win)
        return [[v / total for v in row] for row in win], half

    def filt(img, win, half):
        h, w = len(img), len(img[0])
        out = [[0.0] * w for _ in range(h)]
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for u in range(-half, half + 1):
                    iu = min(max(i + u, 0), h - 1)
                    for v in range(-half, half + 1):
                        jv = min(max(j + v, 0), w - 1)
                        acc += win[u + half][v + half] * img[iu][jv]
                out[i][j] = acc
        return out

    dist = [[float(v) * 255.0 for v in row] for row in dist]
    ref = [[float(v) * 255.0 for v in row] for row in ref]
    eps, sn = 1e-10, 2.0
    num = den = 0.0
    for k in range(1, 5):
        win, half = gauss_win(k)
        if k > 1:
            ref = [row[::2] for row in filt(ref, win, half)[::2]]
            dist = [row[::2] for row in filt(dist, win, half)[::2]]
        mu1 = filt(ref, win, half)
        mu2 = filt(dist, win, half)
        r2 = filt([[a * a for a in row] for row in ref], win, half)
        d2 = filt([[a * a for a in row] for row in dist], win, half)
        rd = filt([[a * b for a, b in zip(r, d)] for r, d in zip(ref, dist)], win, half)
        for i in range(len(ref)):
            for j in range(len(ref[0])):
                s1 = max(r2[i][j] - mu1[i][j] ** 2, 0.0)
                s2 = max(d2[i][j] - mu2[i][j] ** 2, 0.0)
                s12 = rd[i][j] - mu1[i][j] * mu2[i][j]
                g = s12 / (s1 + eps)
                sv = s2 - g * s12
                if s1 < eps:
                    g, sv = 0.0, s2
                if g < 0.0:
                    sv, g = s2, 0.0
                sv = max(sv, eps)
                num += math.log(1.0 + g * g * s1 / (sv + sn))
                den += math.log(1.0 + s1 / sn)
    return num / den
