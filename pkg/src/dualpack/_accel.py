"""Compiled kernels: triangle BVH, exact point-triangle distance, axis-aligned
segment/triangle crossing and the two-phase grid flood fill.

Everything here works on plain float64/int64 arrays so the public modules can
stay numpy-only. Grid arrays are C-ordered ``[x, y, z]``.
"""

from __future__ import annotations

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old; skip it instead of warning on first prange
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

LEAF_SIZE = 4
_STACK = 128


@njit(cache=True)
def _build(tri_lo, tri_hi, cen, leaf_size):
    n = cen.shape[0]
    order = np.arange(n)
    cap = max(1, 2 * n)
    node_lo = np.empty((cap, 3))
    node_hi = np.empty((cap, 3))
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)

    st_node = np.empty(cap, np.int64)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_s[top]
        e = st_e[top]
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for q in range(s, e):
            t = order[q]
            for a in range(3):
                lo[a] = min(lo[a], tri_lo[t, a])
                hi[a] = max(hi[a], tri_hi[t, a])
                clo[a] = min(clo[a], cen[t, a])
                chi[a] = max(chi[a], cen[t, a])
        node_lo[node] = lo
        node_hi[node] = hi
        start[node] = s
        count[node] = e - s
        if e - s <= leaf_size:
            continue
        axis = 0
        ext = chi[0] - clo[0]
        for a in range(1, 3):
            if chi[a] - clo[a] > ext:
                ext = chi[a] - clo[a]
                axis = a
        if ext <= 0.0:
            continue
        sub = order[s:e].copy()
        keys = np.empty(e - s)
        for q in range(e - s):
            keys[q] = cen[sub[q], axis]
        idx = np.argsort(keys, kind="mergesort")
        for q in range(e - s):
            order[s + q] = sub[idx[q]]
        mid = (s + e) // 2
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        count[node] = 0
        st_node[top] = lc
        st_s[top] = s
        st_e[top] = mid
        top += 1
        st_node[top] = rc
        st_s[top] = mid
        st_e[top] = e
        top += 1
    return (node_lo[:n_nodes].copy(), node_hi[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy(), order)


class BVH:
    """Bounding-volume hierarchy over a triangle array of shape (T, 3, 3)."""

    def __init__(self, tris):
        tris = np.ascontiguousarray(tris, dtype=np.float64).reshape(-1, 3, 3)
        self.n_tris = len(tris)
        if self.n_tris == 0:
            raise ValueError("BVH needs at least one triangle")
        lo = tris.min(axis=1)
        hi = tris.max(axis=1)
        cen = tris.mean(axis=1)
        (self.node_lo, self.node_hi, self.left, self.right,
         self.start, self.count, order) = _build(lo, hi, cen, LEAF_SIZE)
        # leaves index straight into the reordered triangle array
        self.order = order
        self.tris = np.ascontiguousarray(tris[order])

    @property
    def arrays(self):
        return (self.node_lo, self.node_hi, self.left, self.right,
                self.start, self.count, self.tris)


@njit(cache=True, inline="always")
def _tri_sqdist(px, py, pz, t):
    ax, ay, az = t[0, 0], t[0, 1], t[0, 2]
    bx, by, bz = t[1, 0], t[1, 1], t[1, 2]
    cx, cy, cz = t[2, 0], t[2, 1], t[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx, qy, qz = ax + v * abx - px, ay + v * aby - py, az + v * abz - pz
        return qx * qx + qy * qy + qz * qz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx, qy, qz = ax + w * acx - px, ay + w * acy - py, az + w * acz - pz
        return qx * qx + qy * qy + qz * qz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bx + w * (cx - bx) - px
        qy = by + w * (cy - by) - py
        qz = bz + w * (cz - bz) - pz
        return qx * qx + qy * qy + qz * qz
    s = va + vb + vc
    if s == 0.0:
        # sliver: the region tests above already covered the edges
        return apx * apx + apy * apy + apz * apz
    v = vb / s
    w = vc / s
    qx = ax + abx * v + acx * w - px
    qy = ay + aby * v + acy * w - py
    qz = az + abz * v + acz * w - pz
    return qx * qx + qy * qy + qz * qz


@njit(cache=True, inline="always")
def _box_sqdist(px, py, pz, lo, hi):
    d = 0.0
    p = (px, py, pz)
    for a in range(3):
        if p[a] < lo[a]:
            d += (lo[a] - p[a]) ** 2
        elif p[a] > hi[a]:
            d += (p[a] - hi[a]) ** 2
    return d


@njit(cache=True)
def _nearest(px, py, pz, best, best_i, node_lo, node_hi, left, right, start, count, tris, stack):
    top = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if _box_sqdist(px, py, pz, node_lo[node], node_hi[node]) >= best:
            continue
        if left[node] < 0:
            for q in range(start[node], start[node] + count[node]):
                d = _tri_sqdist(px, py, pz, tris[q])
                if d < best:
                    best = d
                    best_i = q
            continue
        l, r = left[node], right[node]
        dl = _box_sqdist(px, py, pz, node_lo[l], node_hi[l])
        dr = _box_sqdist(px, py, pz, node_lo[r], node_hi[r])
        if dl < dr:
            if dr < best:
                stack[top] = r
                top += 1
            if dl < best:
                stack[top] = l
                top += 1
        else:
            if dl < best:
                stack[top] = l
                top += 1
            if dr < best:
                stack[top] = r
                top += 1
    return best, best_i


@njit(cache=True, parallel=True)
def points_udf(points, node_lo, node_hi, left, right, start, count, tris):
    n = points.shape[0]
    out = np.empty(n)
    for i in prange(n):
        stack = np.empty(_STACK, np.int64)
        d, _ = _nearest(points[i, 0], points[i, 1], points[i, 2], np.inf, -1,
                        node_lo, node_hi, left, right, start, count, tris, stack)
        out[i] = np.sqrt(d)
    return out


@njit(cache=True, parallel=True)
def grid_udf(lo_idx, shape, h, node_lo, node_hi, left, right, start, count, tris):
    """Exact unsigned distance at voxel centres ``-1 + (idx + 0.5) * h``.

    Each row along z seeds its search with the previous voxel's nearest
    triangle, which makes pruning tight without changing the result.
    """
    nx, ny, nz = shape[0], shape[1], shape[2]
    out = np.empty((nx, ny, nz), np.float64)
    for i in prange(nx):
        stack = np.empty(_STACK, np.int64)
        px = -1.0 + (lo_idx[0] + i + 0.5) * h
        for j in range(ny):
            py = -1.0 + (lo_idx[1] + j + 0.5) * h
            prev = -1
            for k in range(nz):
                pz = -1.0 + (lo_idx[2] + k + 0.5) * h
                best = np.inf
                if prev >= 0:
                    best = _tri_sqdist(px, py, pz, tris[prev])
                d, bi = _nearest(px, py, pz, best, prev,
                                 node_lo, node_hi, left, right, start, count, tris, stack)
                prev = bi
                out[i, j, k] = np.sqrt(d)
    return out


_EPS = 1e-10


@njit(cache=True)
def _seg_tri(p, axis, length, t):
    u = (axis + 1) % 3
    v = (axis + 2) % 3
    pu = p[u]
    pv = p[v]
    x0, y0 = t[0, u] - pu, t[0, v] - pv
    x1, y1 = t[1, u] - pu, t[1, v] - pv
    x2, y2 = t[2, u] - pu, t[2, v] - pv
    # signed double areas of the sub-triangles around the query point
    w0 = x1 * y2 - x2 * y1
    w1 = x2 * y0 - x0 * y2
    w2 = x0 * y1 - x1 * y0
    area = w0 + w1 + w2
    scale = abs(x1 - x0) + abs(y1 - y0) + abs(x2 - x0) + abs(y2 - y0) + 1e-300
    tol = _EPS * scale * scale
    if abs(area) <= tol:
        # triangle seen edge-on: count a touch within tolerance as a crossing
        lo_a = min(t[0, axis], t[1, axis], t[2, axis])
        hi_a = max(t[0, axis], t[1, axis], t[2, axis])
        if hi_a < p[axis] - _EPS or lo_a > p[axis] + length + _EPS:
            return False
        for e in range(3):
            ax_, ay_ = (x0, y0) if e == 0 else ((x1, y1) if e == 1 else (x2, y2))
            bx_, by_ = (x1, y1) if e == 0 else ((x2, y2) if e == 1 else (x0, y0))
            dx, dy = bx_ - ax_, by_ - ay_
            ll = dx * dx + dy * dy
            if ll == 0.0:
                dd = ax_ * ax_ + ay_ * ay_
            else:
                s = -(ax_ * dx + ay_ * dy) / ll
                s = min(1.0, max(0.0, s))
                qx, qy = ax_ + s * dx, ay_ + s * dy
                dd = qx * qx + qy * qy
            if dd <= _EPS * _EPS:
                return True
        return False
    if area > 0:
        if w0 < -tol or w1 < -tol or w2 < -tol:
            return False
    else:
        if w0 > tol or w1 > tol or w2 > tol:
            return False
    a = (w0 * t[0, axis] + w1 * t[1, axis] + w2 * t[2, axis]) / area
    return p[axis] - _EPS <= a <= p[axis] + length + _EPS


@njit(cache=True)
def _segment_hits(p, axis, length, node_lo, node_hi, left, right, start, count, tris, stack):
    lo = p.copy()
    hi = p.copy()
    hi[axis] += length
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        nlo = node_lo[node]
        nhi = node_hi[node]
        skip = False
        for a in range(3):
            if nhi[a] < lo[a] - _EPS or nlo[a] > hi[a] + _EPS:
                skip = True
                break
        if skip:
            continue
        if left[node] < 0:
            for q in range(start[node], start[node] + count[node]):
                if _seg_tri(p, axis, length, tris[q]):
                    return True
            continue
        stack[top] = left[node]
        top += 1
        stack[top] = right[node]
        top += 1
    return False


@njit(cache=True)
def flood_outside(udf, thr, seeds, lo_idx, h, node_lo, node_hi, left, right, start, count, tris):
    """Mark voxels reachable from ``seeds`` without crossing the surface.

    Phase 1 walks 6-neighbours whose distance exceeds ``thr`` (half a voxel
    diagonal); such a step can never cross a triangle. Phase 2 extends the
    reached set into the near-surface band, one step at a time, only when the
    segment between the two voxel centres hits no triangle. Phase 2 never
    re-enters far voxels, so a sub-voxel crack cannot flood an interior.
    """
    nx, ny, nz = udf.shape
    n = nx * ny * nz
    reached = np.zeros((nx, ny, nz), np.bool_)
    queue = np.empty(n, np.int64)
    tail = 0
    for s in range(seeds.shape[0]):
        i, j, k = seeds[s, 0], seeds[s, 1], seeds[s, 2]
        if not reached[i, j, k]:
            reached[i, j, k] = True
            queue[tail] = (i * ny + j) * nz + k
            tail += 1
    di = np.array([1, -1, 0, 0, 0, 0])
    dj = np.array([0, 0, 1, -1, 0, 0])
    dk = np.array([0, 0, 0, 0, 1, -1])
    head = 0
    while head < tail:
        f = queue[head]
        head += 1
        i = f // (ny * nz)
        j = (f // nz) % ny
        k = f % nz
        for d in range(6):
            a, b, c = i + di[d], j + dj[d], k + dk[d]
            if a < 0 or b < 0 or c < 0 or a >= nx or b >= ny or c >= nz:
                continue
            if reached[a, b, c] or udf[a, b, c] <= thr:
                continue
            reached[a, b, c] = True
            queue[tail] = (a * ny + b) * nz + c
            tail += 1

    stack = np.empty(_STACK, np.int64)
    p = np.empty(3)
    head = 0
    while head < tail:
        f = queue[head]
        head += 1
        i = f // (ny * nz)
        j = (f // nz) % ny
        k = f % nz
        for d in range(6):
            a, b, c = i + di[d], j + dj[d], k + dk[d]
            if a < 0 or b < 0 or c < 0 or a >= nx or b >= ny or c >= nz:
                continue
            if reached[a, b, c] or udf[a, b, c] > thr:
                continue
            axis = 0 if d < 2 else (1 if d < 4 else 2)
            # segment starts at the lower of the two centres
            p[0] = -1.0 + (lo_idx[0] + min(i, a) + 0.5) * h
            p[1] = -1.0 + (lo_idx[1] + min(j, b) + 0.5) * h
            p[2] = -1.0 + (lo_idx[2] + min(k, c) + 0.5) * h
            if _segment_hits(p, axis, h, node_lo, node_hi, left, right, start, count, tris, stack):
                continue
            reached[a, b, c] = True
            queue[tail] = (a * ny + b) * nz + c
            tail += 1
    return reached


@njit(cache=True)
def segment_hits(p, axis, length, node_lo, node_hi, left, right, start, count, tris):
    stack = np.empty(_STACK, np.int64)
    return _segment_hits(p, axis, length, node_lo, node_hi, left, right, start, count, tris, stack)
