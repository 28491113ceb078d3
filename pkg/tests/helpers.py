"""Shared test oracles, deliberately independent of the package internals."""

import math

import numpy as np


def brute_force_eval(gray, cascade, x, y, scale, variance_floor=1e-6):
    """Pixel-sum staged cascade evaluation: no integral images, no vectorization."""

    def rhu(v):
        return int(math.floor(v + 0.5))

    win_w, win_h = rhu(cascade.width * scale), rhu(cascade.height * scale)
    inset = rhu(scale)
    iw, ih = rhu((cascade.width - 2) * scale), rhu((cascade.height - 2) * scale)
    inv_area = 1.0 / (iw * ih)
    win = gray[y : y + win_h, x : x + win_w].astype(np.float64)
    inner = win[inset : inset + ih, inset : inset + iw]
    mean = inner.sum() * inv_area
    var = (inner * inner).sum() * inv_area - mean * mean
    if var < variance_floor * 255.0**2:
        return False
    sigma = math.sqrt(var)

    for stage in cascade.stages:
        total = 0.0
        for stump in stage.stumps:
            feat = cascade.features[stump.feature]
            scaled = []
            for r in feat.rects:
                rx, ry = rhu(r.x * scale), rhu(r.y * scale)
                rw, rh = rhu(r.w * scale), rhu(r.h * scale)
                rx, ry = min(rx, win_w - 1), min(ry, win_h - 1)
                rw, rh = max(1, min(rw, win_w - rx)), max(1, min(rh, win_h - ry))
                scaled.append((rx, ry, rw, rh, r.weight))
            weights = [0.0] * len(scaled)
            sum0 = 0.0
            for k, (rx, ry, rw, rh, w0) in enumerate(scaled):
                if k > 0:
                    weights[k] = w0 * inv_area
                    sum0 += weights[k] * rw * rh
            weights[0] = -sum0 / (scaled[0][2] * scaled[0][3])
            value = 0.0
            for (rx, ry, rw, rh, _), w in zip(scaled, weights):
                if w == 0.0:
                    continue
                value += w * win[ry : ry + rh, rx : rx + rw].sum()
            total += stump.left_val if value < stump.threshold * sigma else stump.right_val
        if total < stage.threshold:
            return False
    return True


def spearman_rho(x, y):
    """Rank correlation; assumes no ties within each sequence."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = np.argsort(np.argsort(x))
    ry = np.argsort(np.argsort(y))
    d = rx - ry
    n = len(x)
    return 1.0 - 6.0 * float((d * d).sum()) / (n * (n * n - 1))
