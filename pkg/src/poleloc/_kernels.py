"""Compiled inner loops (voxel walk, column runs, beam casting)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _clip_segment(p0, d, dims):
    # Slab clip of p0 + t*d, t in [0, 1], against the box [0, dims].
    t_in = 0.0
    t_out = 1.0
    for a in range(3):
        if d[a] == 0.0:
            if p0[a] < 0.0 or p0[a] > dims[a]:
                return 1.0, 0.0
        else:
            ta = (0.0 - p0[a]) / d[a]
            tb = (dims[a] - p0[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t_in:
                t_in = ta
            if tb < t_out:
                t_out = tb
    return t_in, t_out


@njit(cache=True)
def _walk(p0, d, dims, t_in, t_out, out):
    """Write the visited voxels of the clipped segment into ``out``.

    Returns the number of voxels written. Voxels are listed in traversal
    order; corner crossings step every tied axis at once so no voxel with
    a zero-length piece is emitted.
    """
    idx = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    for a in range(3):
        pa = p0[a] + t_in * d[a]
        i = int(math.floor(pa))
        if d[a] < 0.0 and pa == i:
            i -= 1
        if i < 0:
            i = 0
        if i > dims[a] - 1:
            i = dims[a] - 1
        idx[a] = i
        step[a] = 1 if d[a] > 0.0 else (-1 if d[a] < 0.0 else 0)
    n = 0
    tmax = np.empty(3)
    while True:
        out[n, 0] = idx[0]
        out[n, 1] = idx[1]
        out[n, 2] = idx[2]
        n += 1
        t_next = np.inf
        for a in range(3):
            if step[a] > 0:
                tmax[a] = (idx[a] + 1 - p0[a]) / d[a]
            elif step[a] < 0:
                tmax[a] = (idx[a] - p0[a]) / d[a]
            else:
                tmax[a] = np.inf
            if tmax[a] < t_next:
                t_next = tmax[a]
        if t_next >= t_out:
            break
        for a in range(3):
            if tmax[a] == t_next:
                idx[a] += step[a]
        inside = True
        for a in range(3):
            if idx[a] < 0 or idx[a] >= dims[a]:
                inside = False
        if not inside:
            break
    return n


@njit(cache=True)
def traverse(p0, p1, dims, out):
    """Voxels visited by the segment p0 -> p1 in grid units.

    Returns ``(n, terminal_inside)``: the first ``n`` rows of ``out`` hold
    the visited voxels, and ``terminal_inside`` tells whether the last
    one contains the segment end (as opposed to the segment leaving the
    grid before reaching it).
    """
    d = p1 - p0
    t_in, t_out = _clip_segment(p0, d, dims)
    if not t_in < t_out:
        return 0, False
    n = _walk(p0, d, dims, t_in, t_out, out)
    return n, t_out >= 1.0


@njit(cache=True)
def insert_rays(starts, ends, hits, origin, spacing, hit_counts, miss_counts):
    """Fused walk-and-count over many rays; returns the number of hits recorded."""
    nx, ny, nz = hit_counts.shape
    dims = np.array([nx, ny, nz], np.int64)
    p0 = np.empty(3)
    d = np.empty(3)
    inv = np.empty(3)
    idx = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    bound = np.empty(3)
    n_hit = 0
    for r in range(starts.shape[0]):
        for a in range(3):
            p0[a] = (starts[r, a] - origin[a]) / spacing
            d[a] = (ends[r, a] - origin[a]) / spacing - p0[a]
        t_in, t_out = _clip_segment(p0, d, dims)
        if not t_in < t_out:
            continue
        terminal = t_out >= 1.0
        for a in range(3):
            pa = p0[a] + t_in * d[a]
            i = int(math.floor(pa))
            if d[a] < 0.0 and pa == i:
                i -= 1
            if i < 0:
                i = 0
            if i > dims[a] - 1:
                i = dims[a] - 1
            idx[a] = i
            if d[a] > 0.0:
                step[a] = 1
                inv[a] = 1.0 / d[a]
                bound[a] = (i + 1 - p0[a]) * inv[a]
            elif d[a] < 0.0:
                step[a] = -1
                inv[a] = 1.0 / d[a]
                bound[a] = (i - p0[a]) * inv[a]
            else:
                step[a] = 0
                inv[a] = 0.0
                bound[a] = np.inf
        i, j, k = idx[0], idx[1], idx[2]
        while True:
            t_next = min(bound[0], bound[1], bound[2])
            if t_next >= t_out:
                break
            miss_counts[i, j, k] += 1
            if bound[0] == t_next:
                i += step[0]
                bound[0] = ((i + 1 if step[0] > 0 else i) - p0[0]) * inv[0]
            if bound[1] == t_next:
                j += step[1]
                bound[1] = ((j + 1 if step[1] > 0 else j) - p0[1]) * inv[1]
            if bound[2] == t_next:
                k += step[2]
                bound[2] = ((k + 1 if step[2] > 0 else k) - p0[2]) * inv[2]
            if i < 0 or i >= nx or j < 0 or j >= ny or k < 0 or k >= nz:
                terminal = False
                i = -1
                break
        if i < 0:
            continue
        if terminal and hits[r]:
            hit_counts[i, j, k] += 1
            n_hit += 1
        else:
            miss_counts[i, j, k] += 1
    return n_hit


@njit(cache=True)
def anchored_scores(o, a, f):
    """Footprint mean minus hull max for every admissible lower-left anchor
    (-inf elsewhere)."""
    nx, ny, nz = o.shape
    out = np.full((nx, ny, nz), -np.inf)
    inner = np.empty(nz)
    hull = np.empty(nz)
    area = a * a
    for i in range(f, nx - a - f + 1):
        for j in range(f, ny - a - f + 1):
            inner[:] = 0.0
            hull[:] = -np.inf
            for di in range(-f, a + f):
                for dj in range(-f, a + f):
                    if 0 <= di < a and 0 <= dj < a:
                        for z in range(nz):
                            inner[z] += o[i + di, j + dj, z]
                    else:
                        for z in range(nz):
                            v = o[i + di, j + dj, z]
                            if v > hull[z]:
                                hull[z] = v
            for z in range(nz):
                out[i, j, z] = inner[z] / area - hull[z]
    return out


@njit(cache=True)
def containing_max(anchor, a):
    """Per voxel, the best anchor among the footprints that contain it
    (anchors i-a+1..i by j-a+1..j), floored at -1. Separable in x and y."""
    nx, ny, nz = anchor.shape
    tmp = np.full((nx, ny, nz), -1.0)
    for i in range(nx):
        for j in range(ny):
            for dj in range(min(a, j + 1)):
                for z in range(nz):
                    v = anchor[i, j - dj, z]
                    if v > tmp[i, j, z]:
                        tmp[i, j, z] = v
    out = np.full((nx, ny, nz), -1.0)
    for i in range(nx):
        for di in range(min(a, i + 1)):
            for j in range(ny):
                for z in range(nz):
                    v = tmp[i - di, j, z]
                    if v > out[i, j, z]:
                        out[i, j, z] = v
    return out


@njit(cache=True)
def merge_into(best, width, values, a):
    """In-place running maximum; ties keep the earlier size."""
    b = best.ravel()
    w = width.ravel()
    v = values.ravel()
    for n in range(b.size):
        if v[n] > b[n]:
            b[n] = v[n]
            w[n] = a


@njit(cache=True)
def column_runs(q, q_min, min_cells):
    """Tallest run of ``q > q_min`` per column (ties resolved to the lowest).

    Returns score (NaN where no run reaches ``min_cells``), run start and
    run stop (exclusive) per column.
    """
    nx, ny, nz = q.shape
    score = np.full((nx, ny), np.nan)
    lo = np.full((nx, ny), -1, np.int64)
    hi = np.full((nx, ny), -1, np.int64)
    for i in range(nx):
        for j in range(ny):
            best_len = 0
            best_start = -1
            k = 0
            while k < nz:
                if q[i, j, k] > q_min:
                    s = k
                    while k < nz and q[i, j, k] > q_min:
                        k += 1
                    if k - s > best_len:
                        best_len = k - s
                        best_start = s
                else:
                    k += 1
            if best_len >= min_cells and best_len > 0:
                acc = 0.0
                for kk in range(best_start, best_start + best_len):
                    acc += q[i, j, kk]
                score[i, j] = acc / best_len
                lo[i, j] = best_start
                hi[i, j] = best_start + best_len
    return score, lo, hi


@njit(cache=True)
def _box_hit(ox, oy, oz, dx, dy, dz, lo0, lo1, lo2, hi0, hi1, hi2):
    t0 = 0.0
    t1 = np.inf
    o = (ox, oy, oz)
    dd = (dx, dy, dz)
    lo = (lo0, lo1, lo2)
    hi = (hi0, hi1, hi2)
    for a in range(3):
        if dd[a] == 0.0:
            if o[a] < lo[a] or o[a] > hi[a]:
                return np.inf
        else:
            ta = (lo[a] - o[a]) / dd[a]
            tb = (hi[a] - o[a]) / dd[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 <= t1:
        return t0
    return np.inf


@njit(cache=True)
def cast_beams(origin, dirs, boxes, cylinders, walls, max_range, ground):
    """Nearest hit distance per unit direction (inf when nothing within range).

    boxes: (n, 6) lo/hi corners; cylinders: (n, 4) x, y, radius, height;
    walls: (n, 5) x0, y0, x1, y1, height (zero-thickness vertical panels).
    """
    n = dirs.shape[0]
    out = np.full(n, np.inf)
    ox, oy, oz = origin[0], origin[1], origin[2]
    for r in range(n):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best = max_range
        found = False
        if ground and dz < 0.0:
            t = -oz / dz
            if 0.0 <= t <= best:
                best = t
                found = True
        for b in range(boxes.shape[0]):
            t = _box_hit(ox, oy, oz, dx, dy, dz, boxes[b, 0], boxes[b, 1],
                         boxes[b, 2], boxes[b, 3], boxes[b, 4], boxes[b, 5])
            if t <= best:
                best = t
                found = True
        for c in range(cylinders.shape[0]):
            cx = ox - cylinders[c, 0]
            cy = oy - cylinders[c, 1]
            rad = cylinders[c, 2]
            a = dx * dx + dy * dy
            if a == 0.0:
                continue
            bq = cx * dx + cy * dy
            cq = cx * cx + cy * cy - rad * rad
            disc = bq * bq - a * cq
            if disc < 0.0:
                continue
            t = (-bq - math.sqrt(disc)) / a
            if t < 0.0:
                if cq <= 0.0:
                    t = 0.0
                else:
                    continue
            z = oz + t * dz
            if 0.0 <= z <= cylinders[c, 3] and t <= best:
                best = t
                found = True
        for w in range(walls.shape[0]):
            ex = walls[w, 2] - walls[w, 0]
            ey = walls[w, 3] - walls[w, 1]
            den = dx * ey - dy * ex
            if den == 0.0:
                continue
            qx = walls[w, 0] - ox
            qy = walls[w, 1] - oy
            t = (qx * ey - qy * ex) / den
            s = (qx * dy - qy * dx) / den
            if t < 0.0 or s < 0.0 or s > 1.0:
                continue
            z = oz + t * dz
            if 0.0 <= z <= walls[w, 4] and t <= best:
                best = t
                found = True
        if found:
            out[r] = best
    return out
