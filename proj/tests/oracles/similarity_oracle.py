"""Independent numpy re-implementation of the trajectory similarity pipeline.

Used once to freeze regression values into tests/test_eval.cpp. Shares no
code with the C++ implementation.
"""
import itertools
import math

import numpy as np


def normalize(pts):
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=0)
    out = pts - c
    r = np.sqrt((out ** 2).sum(axis=1)).max()
    if r > 0:
        out = out / r
    return out


def resample(ts, pts, grid):
    xs = np.interp(grid, ts, pts[:, 0])
    ys = np.interp(grid, ts, pts[:, 1])
    return np.stack([xs, ys], axis=1)


def common_grid(ta, tb, n):
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if hi > lo:
        g = np.linspace(lo, hi, n)
        return g, g, (hi - lo) / (n - 1)
    ga = np.linspace(ta[0], ta[-1], n) if len(ta) > 1 else np.full(n, ta[0])
    gb = np.linspace(tb[0], tb[-1], n) if len(tb) > 1 else np.full(n, tb[0])
    return ga, gb, 0.0


def dtw(a, b):
    n, m = len(a), len(b)
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c = math.hypot(*(a[i - 1] - b[j - 1]))
            D[i, j] = c + min(D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])
    # backtrack: diagonal, then up, then left on ties
    i, j, steps = n, m, 1
    while (i, j) != (1, 1):
        cands = []
        if i > 1 and j > 1:
            cands.append((D[i - 1, j - 1], i - 1, j - 1))
        if i > 1:
            cands.append((D[i - 1, j], i - 1, j))
        if j > 1:
            cands.append((D[i, j - 1], i, j - 1))
        best = min(c[0] for c in cands)
        _, i, j = next(c for c in cands if c[0] == best)
        steps += 1
    return D[n, m], steps


def report(ta, pa, tb, pb):
    ta, tb = np.asarray(ta, float), np.asarray(tb, float)
    na, nb = normalize(pa), normalize(pb)
    n = max(len(ta), len(tb))
    ga, gb, period = common_grid(ta, tb, n)
    ra = resample(ta, na, ga) if len(ta) > 1 else np.repeat(na, n, axis=0)
    rb = resample(tb, nb, gb) if len(tb) > 1 else np.repeat(nb, n, axis=0)
    dist, plen = dtw(ra, rb)
    sim = 1.0 / (1.0 + dist / plen)
    best, lag = -np.inf, 0
    order = [0] + [x for k in range(1, n // 2 + 1) for x in (-k, k)]
    for s in order:
        if s >= 0:
            d = np.sqrt(((ra[: n - s] - rb[s:]) ** 2).sum(axis=1)).mean()
        else:
            d = np.sqrt(((ra[-s:] - rb[: n + s]) ** 2).sum(axis=1)).mean()
        if -d > best + 1e-9:
            best, lag = -d, s
    return dist, sim, plen, lag * period


def brute_dtw_1d(a, b):
    best = math.inf
    stack = [(0, 0, abs(a[0] - b[0]))]
    while stack:
        i, j, c = stack.pop()
        if i == len(a) - 1 and j == len(b) - 1:
            best = min(best, c)
            continue
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < len(a) and nj < len(b):
                stack.append((ni, nj, c + abs(a[ni] - b[nj])))
    return best


if __name__ == "__main__":
    print("dtw([0,1,2],[0,2]) =", brute_dtw_1d([0, 1, 2], [0, 2]))

    n = 20
    t = [0.1 * i for i in range(n)]
    circ = np.array([[math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n)] for i in range(n)])
    rolled = np.roll(circ, -1, axis=0)
    d, s, p, lag = report(t, circ, t, rolled)
    print(f"circle roll-1: dtw={d:.17g} sim={s:.17g} path={p} lag={lag:.17g}")

    # closed loop delayed by 5 samples at 10 Hz
    m = 40
    ta = [0.1 * i for i in range(m)]
    loop = np.array([[1.5 * math.cos(2 * math.pi * i / m), math.sin(2 * math.pi * i / m)] for i in range(m)])
    delayed = np.roll(loop, 5, axis=0)
    d, s, p, lag = report(ta, loop, ta, delayed)
    print(f"loop delay-5: dtw={d:.17g} sim={s:.17g} path={p} lag={lag:.17g}")

    # asymmetric open path against its reverse
    path = np.array([[0.1 * i, (0.1 * i) ** 2] for i in range(12)])
    tt = [0.1 * i for i in range(12)]
    d, s, p, lag = report(tt, path, tt, path[::-1])
    print(f"reverse: dtw={d:.17g} sim={s:.17g} path={p} lag={lag:.17g}")
