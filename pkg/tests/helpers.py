"""Independent reference implementations used as test oracles."""

import numpy as np


def frame_cost(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """(T1, T2) matrix of mean per-vertex distances."""
    diff = pred[:, None, :, :] - truth[None, :, :, :]
    return np.linalg.norm(diff, axis=3).mean(axis=2)


def dtw_by_enumeration(pred: np.ndarray, truth: np.ndarray) -> float:
    """Exhaustive minimum over all monotone warping paths.

    Paths start at (0, 0), end at (T1-1, T2-1), and move by (1,0), (0,1),
    or (1,1). Only tractable for tiny inputs.
    """
    cost = frame_cost(pred, truth)
    t1, t2 = cost.shape
    best = [float("inf")]

    def walk(i, j, total):
        total += cost[i, j]
        if total >= best[0]:
            return
        if i == t1 - 1 and j == t2 - 1:
            best[0] = total
            return
        if i + 1 < t1:
            walk(i + 1, j, total)
        if j + 1 < t2:
            walk(i, j + 1, total)
        if i + 1 < t1 and j + 1 < t2:
            walk(i + 1, j + 1, total)

    walk(0, 0, 0.0)
    return best[0]


def reference_adam_step(param, grad, m, v, t, lr=1e-4, b1=0.9, b2=0.999, eps=1e-8):
    """One textbook Adam update; returns (new_param, new_m, new_v)."""
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def direct_conv1d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1):
    """Naive nested-loop cross-correlation with zero padding (k-1)/2."""
    t_in, c_in = x.shape
    c_out, _, k = weight.shape
    pad = (k - 1) // 2
    t_out = (t_in + 2 * pad - k) // stride + 1
    padded = np.zeros((t_in + 2 * pad, c_in))
    padded[pad:pad + t_in] = x
    out = np.zeros((t_out, c_out))
    for t in range(t_out):
        window = padded[t * stride:t * stride + k]  # (k, c_in)
        for o in range(c_out):
            out[t, o] = np.sum(window.T * weight[o]) + bias[o]
    return out


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 0.0
    return float((a * b).sum() / denom)
