"""Independent reference computations used only by the tests.

Nothing here imports from ``dramorigin``: each oracle re-derives its result
from first principles (plain loops, or numpy used through different
mechanisms than the package), so a shared bug cannot hide.
"""

import itertools
import math
import zlib

import numpy as np


def written_bit(pattern_id, bit):
    if pattern_id == 1:
        return 1
    if pattern_id == 2:
        return 0
    stripe = 1 if bit % 2 == 0 else 0
    return stripe if pattern_id == 3 else 1 - stripe


def flip_list(d_r, pattern_id):
    """d_F as nested lists, cell by cell."""
    return [[int(d_r[w][b]) ^ written_bit(pattern_id, b) for b in range(64)] for w in range(1024)]


def pop_std(values):
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def tile_std(d_f, height, width):
    counts = []
    for w0 in range(0, 1024, height):
        for b0 in range(0, 64, width):
            c = 0
            for w in range(w0, w0 + height):
                row = d_f[w]
                for b in range(b0, b0 + width):
                    c += row[b]
            counts.append(c)
    return pop_std(counts)


def page_bytes(d_r):
    out = bytearray()
    for w in range(1024):
        for byte in range(8):
            v = 0
            for k in range(8):
                v = (v << 1) | int(d_r[w][byte * 8 + k])
            out.append(v)
    return bytes(out)


def raw_deflate_len(data, level=6):
    c = zlib.compressobj(level, zlib.DEFLATED, -15)
    return len(c.compress(data) + c.flush())


def straight_line_features(pages):
    """``pages`` maps pattern id 1..4 to a 1024x64 nested list / array of read bits."""
    vec = []
    tail = []
    for pid in (1, 2, 3, 4):
        d_r = pages[pid]
        d_f = flip_list(d_r, pid)
        fbc = sum(sum(r) for r in d_f)
        ratio = 8192 / raw_deflate_len(page_bytes(d_r))
        vec += [fbc, ratio, tile_std(d_f, 64, 1), tile_std(d_f, 1, 8), tile_std(d_f, 1024, 1), tile_std(d_f, 1, 64)]
        if pid in (3, 4):
            tail.append(sum(1 for w in range(1024) for b in range(64) if d_f[w][b] == 1 and int(d_r[w][b]) == 1))
    return vec + tail


def rbf(x, y, gamma):
    return math.exp(-gamma * sum((a - b) ** 2 for a, b in zip(x, y)))


def dual_objective(alpha, points, gamma):
    l = len(points)
    lin = sum(alpha[i] * rbf(points[i], points[i], gamma) for i in range(l))
    quad = sum(alpha[i] * alpha[j] * rbf(points[i], points[j], gamma) for i in range(l) for j in range(l))
    return lin - quad


_COMPOSITIONS = {}


def compositions(n, parts):
    """All non-negative integer vectors of length ``parts`` summing to ``n`` (stars and bars)."""
    key = (n, parts)
    if key not in _COMPOSITIONS:
        bars = np.array(list(itertools.combinations(range(n + parts - 1), parts - 1)), dtype=np.int16)
        edges = np.hstack([np.full((len(bars), 1), -1, np.int16), bars, np.full((len(bars), 1), n + parts - 1, np.int16)])
        _COMPOSITIONS[key] = (np.diff(edges, axis=1) - 1).astype(np.int16)
    return _COMPOSITIONS[key]


def simplex_grid_max(points, C, gamma, step=0.01):
    """Best dual objective over the feasible grid {alpha : sum = 1, 0 <= alpha_i <= C, alpha_i in step*Z}."""
    l = len(points)
    n = round(1 / step)
    K = np.array([[rbf(points[i], points[j], gamma) for j in range(l)] for i in range(l)])
    grid = compositions(n, l)
    grid = grid[(grid <= math.floor(C / step + 1e-9)).all(axis=1)]
    best = -math.inf
    for chunk in np.array_split(grid, max(1, len(grid) // 500_000)):
        a = chunk * step
        vals = a @ np.diag(K) - ((a @ K) * a).sum(axis=1)
        best = max(best, float(vals.max()))
    return best


def kernel_expansion_distance2(x, support, alphas, gamma):
    w2 = sum(ai * aj * rbf(si, sj, gamma) for ai, si in zip(alphas, support) for aj, sj in zip(alphas, support))
    cross = sum(a * rbf(s, x, gamma) for a, s in zip(alphas, support))
    return 1.0 - 2.0 * cross + w2


_BYTE_WEIGHTS = np.array([128, 64, 32, 16, 8, 4, 2, 1])


def written_matrix(pattern_id):
    return np.array([[written_bit(pattern_id, b) for b in range(64)]] * 1024)


def reduceat_std(d_f, height, width):
    rows = np.add.reduceat(d_f, np.arange(0, 1024, height), axis=0)
    tiles = np.add.reduceat(rows, np.arange(0, 64, width), axis=1)
    t = tiles.astype(float).ravel()
    return math.sqrt(((t - t.sum() / t.size) ** 2).sum() / t.size)


def vector_features(pages):
    """Same quantities as :func:`straight_line_features`, vectorised differently."""
    vec, tail = [], []
    for pid in (1, 2, 3, 4):
        d_r = np.asarray(pages[pid]).astype(np.int64)
        d_f = (d_r != written_matrix(pid)).astype(np.int64)
        payload = (d_r.reshape(1024, 8, 8) @ _BYTE_WEIGHTS).astype(np.uint8).tobytes()
        vec += [int(d_f.sum()), 8192 / raw_deflate_len(payload)]
        vec += [reduceat_std(d_f, h, w) for h, w in ((64, 1), (1, 8), (1024, 1), (1, 64))]
        if pid in (3, 4):
            tail.append(int((d_f * d_r).sum()))
    return vec + tail
