"""Reference numpy implementations of the compiled kernels."""
import numpy as np

BACKEND = "python"


def _phase_env(u, d):
    t = d[4:] * u
    return 0.5 * np.sum(np.arctan(t)), 1.0 / (u * np.exp(0.25 * np.sum(np.log1p(t * t))))


def imhof_head(u, d):
    if u == 0.0:
        return 0.5 * (np.sum(d[4:]) - d[0])
    a, env = _phase_env(u, d)
    return np.sin(a - 0.5 * d[0] * u) * env


def imhof_tail_cos(t, d):
    wc = 0.5 * d[0] * d[2]
    a, env = _phase_env(d[2] + t, d)
    return env * (np.sin(a) * np.cos(wc) - np.cos(a) * np.sin(wc))


def imhof_tail_sin(t, d):
    wc = 0.5 * d[0] * d[2]
    a, env = _phase_env(d[2] + t, d)
    return -env * (np.sin(a) * np.sin(wc) + np.cos(a) * np.cos(wc))


def bray_curtis(rows):
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    out = np.zeros((n, n))
    totals = rows.sum(axis=1)
    # row-at-a-time keeps memory at O(n p)
    for i in range(n - 1):
        num = np.abs(rows[i + 1:] - rows[i]).sum(axis=1)
        out[i, i + 1:] = num / (totals[i + 1:] + totals[i])
    return out + out.T


def hc_prefix_max(sorted_p, hs, eps=1e-15):
    sorted_p = np.asarray(sorted_p, dtype=float)
    hs = np.asarray(hs)
    m = sorted_p.shape[1]
    p = np.clip(sorted_p[:, :hs[-1]], eps, 1.0 - eps)
    j = np.arange(1, p.shape[1] + 1)
    terms = np.sqrt(m) * (j / m - p) / np.sqrt(p * (1.0 - p))
    return np.maximum.accumulate(terms, axis=1)[:, hs - 1]


def simes_min(sorted_p):
    sorted_p = np.asarray(sorted_p, dtype=float)
    m = sorted_p.shape[1]
    return np.min(sorted_p * m / np.arange(1, m + 1), axis=1)
