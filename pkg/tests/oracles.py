"""Independent reference implementations used as test oracles.

These are deliberately written as direct, loop-based translations of the
definitions so they share no code path with the package.
"""

import math

import numpy as np


def conv3d_loops(x, k, stride=(1, 1, 1), padding=(0, 0, 0)):
    """Direct-summation 3-D cross-correlation over a zero-padded input."""
    B, Ci, S, H, W = x.shape
    Co, _, kS, kH, kW = k.shape
    sS, sH, sW = stride
    pS, pH, pW = padding
    So = (S + 2 * pS - kS) // sS + 1
    Ho = (H + 2 * pH - kH) // sH + 1
    Wo = (W + 2 * pW - kW) // sW + 1
    out = np.zeros((B, Co, So, Ho, Wo), dtype=np.float64)
    for b in range(B):
        for co in range(Co):
            for so in range(So):
                for ho in range(Ho):
                    for wo in range(Wo):
                        acc = 0.0
                        for ci in range(Ci):
                            for a in range(kS):
                                for bb in range(kH):
                                    for c in range(kW):
                                        zs = so * sS + a - pS
                                        zh = ho * sH + bb - pH
                                        zw = wo * sW + c - pW
                                        if 0 <= zs < S and 0 <= zh < H and 0 <= zw < W:
                                            acc += x[b, ci, zs, zh, zw] * k[co, ci, a, bb, c]
                        out[b, co, so, ho, wo] = acc
    return out


def pointwise_linear_rows(x, w, bias=None):
    """Row-by-row dot products over the flattened leading axes."""
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty((flat.shape[0], w.shape[1]), dtype=np.float64)
    for r in range(flat.shape[0]):
        for d in range(w.shape[1]):
            out[r, d] = float(np.dot(flat[r], w[:, d]))
            if bias is not None:
                out[r, d] += bias[d]
    return out.reshape(*lead, w.shape[1])


def erf_series(x, terms=40):
    """Maclaurin series for erf: 2/sqrt(pi) * sum (-1)^n x^(2n+1)/(n!(2n+1))."""
    acc = 0.0
    for n in range(terms):
        acc += (-1.0) ** n * x ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1))
    return 2.0 / math.sqrt(math.pi) * acc


def normal_cdf_series(x):
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


def gaussian_window_2d(size, sigma):
    half = (size - 1) / 2.0
    g = np.array([math.exp(-((i - half) ** 2) / (2 * sigma * sigma)) for i in range(size)])
    win = np.outer(g, g)
    return win / win.sum()


def ssim_band_windows(img1, img2, window=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """Per-window SSIM from first principles (weighted moments per
    window position, explicit python loop over positions)."""
    win = gaussian_window_2d(window, sigma)
    h, w = img1.shape
    vals = []
    for top in range(h - window + 1):
        for left in range(w - window + 1):
            p1 = img1[top:top + window, left:left + window]
            p2 = img2[top:top + window, left:left + window]
            mu1 = float(np.sum(win * p1))
            mu2 = float(np.sum(win * p2))
            var1 = float(np.sum(win * p1 * p1)) - mu1 * mu1
            var2 = float(np.sum(win * p2 * p2)) - mu2 * mu2
            cov = float(np.sum(win * p1 * p2)) - mu1 * mu2
            num = (2 * mu1 * mu2 + c1) * (2 * cov + c2)
            den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def recurrence_closed_form(z, w, direction):
    """Band j output as an explicit weighted sum of candidate bands."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    s = z.shape[2]
    order = list(range(s)) if direction == "forward" else list(range(s - 1, -1, -1))
    out = np.zeros_like(z)
    for jpos, j in enumerate(order):
        total = np.zeros_like(z[:, :, 0])
        for ipos in range(jpos + 1):
            i = order[ipos]
            coeff = 1.0 - w[:, :, i]
            for kpos in range(ipos + 1, jpos + 1):
                coeff = coeff * w[:, :, order[kpos]]
            total = total + coeff * z[:, :, i]
        out[:, :, j] = total
    return out
