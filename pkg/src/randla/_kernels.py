"""Compiled kernels: KD-tree construction and exact queries, greedy
farthest-point selection, Poisson-disk dart throwing, and the scatter-add
used by the autodiff gather op.

All neighbor queries order candidates by the pair (squared distance, source
index); subtree pruning is strict (`>`), so candidates tied with the current
worst are still visited.  That makes query results bit-identical to a
brute-force scan sorted by (distance, index).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_STACK = 128  # median splits keep depth ~log2(N); 128 covers N up to 2**120


# ---------------------------------------------------------------------------
# KD-tree build
# ---------------------------------------------------------------------------

@njit(cache=True)
def _select_nth(perm, coords, dim, left, right, k):
    """Hoare quickselect: place the k-th smallest of perm[left..right] at k."""
    while right > left:
        a = coords[perm[left], dim]
        b = coords[perm[(left + right) // 2], dim]
        c = coords[perm[right], dim]
        # median-of-three pivot value
        if a > b:
            a, b = b, a
        if b > c:
            b = c
        if a > b:
            b = a
        pivot = b
        i, j = left, right
        while i <= j:
            while coords[perm[i], dim] < pivot:
                i += 1
            while coords[perm[j], dim] > pivot:
                j -= 1
            if i <= j:
                perm[i], perm[j] = perm[j], perm[i]
                i += 1
                j -= 1
        if k <= j:
            right = j
        elif k >= i:
            left = i
        else:
            return


@njit(cache=True)
def build_tree(coords, leaf_size):
    n = coords.shape[0]
    perm = np.arange(n, dtype=np.int64)
    max_nodes = max(16, 4 * (n // max(1, leaf_size)) + 16)
    split_dim = np.full(max_nodes, -1, dtype=np.int32)
    split_val = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    start = np.zeros(max_nodes, dtype=np.int32)
    end = np.zeros(max_nodes, dtype=np.int32)

    node_count = 1
    stack = np.empty((max_nodes, 3), dtype=np.int64)  # (node, start, end)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    top = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        s = stack[top, 1]
        e = stack[top, 2]
        start[node] = s
        end[node] = e
        if e - s <= leaf_size:
            continue
        # split along the axis of largest extent
        best_dim = 0
        best_extent = -1.0
        for d in range(3):
            lo = coords[perm[s], d]
            hi = lo
            for t in range(s + 1, e):
                v = coords[perm[t], d]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi - lo > best_extent:
                best_extent = hi - lo
                best_dim = d
        if best_extent <= 0.0:
            continue  # all points identical: keep as one (oversized) leaf
        mid = (s + e) // 2
        _select_nth(perm, coords, best_dim, s, e - 1, mid)
        split_dim[node] = best_dim
        split_val[node] = coords[perm[mid], best_dim]
        lc = node_count
        rc = node_count + 1
        node_count += 2
        left[node] = lc
        right[node] = rc
        stack[top, 0] = lc
        stack[top, 1] = s
        stack[top, 2] = mid
        top += 1
        stack[top, 0] = rc
        stack[top, 1] = mid
        stack[top, 2] = e
        top += 1
    return perm, split_dim[:node_count], split_val[:node_count], left[:node_count], right[:node_count], start[:node_count], end[:node_count]


# ---------------------------------------------------------------------------
# KNN query (exact, (distance, index)-lexicographic)
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _heap_sift_down(hd, hi, size, pos):
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        if child + 1 < size and (hd[child + 1] > hd[child] or (hd[child + 1] == hd[child] and hi[child + 1] > hi[child])):
            child += 1
        if hd[child] > hd[pos] or (hd[child] == hd[pos] and hi[child] > hi[pos]):
            hd[pos], hd[child] = hd[child], hd[pos]
            hi[pos], hi[child] = hi[child], hi[pos]
            pos = child
        else:
            return


@njit(cache=True, inline="always")
def _heap_push(hd, hi, size, d, i):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) // 2
        if hd[pos] > hd[parent] or (hd[pos] == hd[parent] and hi[pos] > hi[parent]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            return


@njit(cache=True)
def _knn_one(coords, perm, split_dim, split_val, left, right, start, end,
             qx, qy, qz, k, exclude, hd, hi, node_stack, off_stack):
    size = 0
    top = 0
    node_stack[top] = 0
    off_stack[top] = 0.0
    top += 1
    while top > 0:
        top -= 1
        node = node_stack[top]
        off2 = off_stack[top]
        if size == k and (off2 > hd[0]):
            continue
        while split_dim[node] >= 0:
            dim = split_dim[node]
            if dim == 0:
                diff = qx - split_val[node]
            elif dim == 1:
                diff = qy - split_val[node]
            else:
                diff = qz - split_val[node]
            if diff < 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            d2 = diff * diff
            if size < k or d2 <= hd[0]:
                node_stack[top] = far
                off_stack[top] = d2
                top += 1
            node = near
        for t in range(start[node], end[node]):
            i = perm[t]
            if i == exclude:
                continue
            dx = coords[i, 0] - qx
            dy = coords[i, 1] - qy
            dz = coords[i, 2] - qz
            d = dx * dx + dy * dy + dz * dz
            if size < k:
                _heap_push(hd, hi, size, d, i)
                size += 1
            elif d < hd[0] or (d == hd[0] and i < hi[0]):
                hd[0] = d
                hi[0] = i
                _heap_sift_down(hd, hi, size, 0)
    return size


@njit(cache=True, inline="always")
def _knn_row(coords, perm, split_dim, split_val, left, right, start, end,
             queries, k, exclude_ids, out_idx, out_dist, row,
             hd, hi, node_stack, off_stack):
    size = _knn_one(coords, perm, split_dim, split_val, left, right, start, end,
                    queries[row, 0], queries[row, 1], queries[row, 2],
                    k, exclude_ids[row], hd, hi, node_stack, off_stack)
    # heap-sort the heap contents into ascending (distance, index) order
    for pos in range(size - 1, 0, -1):
        hd[0], hd[pos] = hd[pos], hd[0]
        hi[0], hi[pos] = hi[pos], hi[0]
        _heap_sift_down(hd, hi, pos, 0)
    for j in range(size):
        out_dist[row, j] = np.sqrt(hd[j])
        out_idx[row, j] = hi[j]


@njit(cache=True)
def knn_query_serial(coords, perm, split_dim, split_val, left, right, start, end,
                     queries, k, exclude_ids):
    q = queries.shape[0]
    out_idx = np.empty((q, k), dtype=np.int64)
    out_dist = np.empty((q, k), dtype=np.float64)
    hd = np.empty(k, dtype=np.float64)
    hi = np.empty(k, dtype=np.int64)
    node_stack = np.empty(_STACK, dtype=np.int64)
    off_stack = np.empty(_STACK, dtype=np.float64)
    for row in range(q):
        _knn_row(coords, perm, split_dim, split_val, left, right, start, end,
                 queries, k, exclude_ids, out_idx, out_dist, row,
                 hd, hi, node_stack, off_stack)
    return out_idx, out_dist


@njit(cache=True, parallel=True)
def knn_query(coords, perm, split_dim, split_val, left, right, start, end,
              queries, k, exclude_ids):
    q = queries.shape[0]
    out_idx = np.empty((q, k), dtype=np.int64)
    out_dist = np.empty((q, k), dtype=np.float64)
    for row in prange(q):
        hd = np.empty(k, dtype=np.float64)
        hi = np.empty(k, dtype=np.int64)
        node_stack = np.empty(_STACK, dtype=np.int64)
        off_stack = np.empty(_STACK, dtype=np.float64)
        _knn_row(coords, perm, split_dim, split_val, left, right, start, end,
                 queries, k, exclude_ids, out_idx, out_dist, row,
                 hd, hi, node_stack, off_stack)
    return out_idx, out_dist


# ---------------------------------------------------------------------------
# Radius queries
# ---------------------------------------------------------------------------

@njit(cache=True)
def _radius_count_one(coords, perm, split_dim, split_val, left, right, start, end,
                      qx, qy, qz, r2, node_stack):
    count = 0
    top = 0
    node_stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = node_stack[top]
        while split_dim[node] >= 0:
            dim = split_dim[node]
            if dim == 0:
                diff = qx - split_val[node]
            elif dim == 1:
                diff = qy - split_val[node]
            else:
                diff = qz - split_val[node]
            if diff < 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            if diff * diff <= r2:
                node_stack[top] = far
                top += 1
            node = near
        for t in range(start[node], end[node]):
            i = perm[t]
            dx = coords[i, 0] - qx
            dy = coords[i, 1] - qy
            dz = coords[i, 2] - qz
            if dx * dx + dy * dy + dz * dz <= r2:
                count += 1
    return count


@njit(cache=True)
def _radius_fill_one(coords, perm, split_dim, split_val, left, right, start, end,
                     qx, qy, qz, r2, node_stack, out_idx, out_dist, offset):
    pos = offset
    top = 0
    node_stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = node_stack[top]
        while split_dim[node] >= 0:
            dim = split_dim[node]
            if dim == 0:
                diff = qx - split_val[node]
            elif dim == 1:
                diff = qy - split_val[node]
            else:
                diff = qz - split_val[node]
            if diff < 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            if diff * diff <= r2:
                node_stack[top] = far
                top += 1
            node = near
        for t in range(start[node], end[node]):
            i = perm[t]
            dx = coords[i, 0] - qx
            dy = coords[i, 1] - qy
            dz = coords[i, 2] - qz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= r2:
                out_idx[pos] = i
                out_dist[pos] = np.sqrt(d2)
                pos += 1
    return pos


@njit(cache=True)
def radius_query(coords, perm, split_dim, split_val, left, right, start, end,
                 queries, radius):
    q = queries.shape[0]
    r2 = radius * radius
    node_stack = np.empty(_STACK, dtype=np.int64)
    counts = np.empty(q, dtype=np.int64)
    for row in range(q):
        counts[row] = _radius_count_one(coords, perm, split_dim, split_val, left, right,
                                        start, end, queries[row, 0], queries[row, 1],
                                        queries[row, 2], r2, node_stack)
    offsets = np.zeros(q + 1, dtype=np.int64)
    for row in range(q):
        offsets[row + 1] = offsets[row] + counts[row]
    total = offsets[q]
    out_idx = np.empty(total, dtype=np.int64)
    out_dist = np.empty(total, dtype=np.float64)
    for row in range(q):
        _radius_fill_one(coords, perm, split_dim, split_val, left, right, start, end,
                         queries[row, 0], queries[row, 1], queries[row, 2], r2,
                         node_stack, out_idx, out_dist, offsets[row])
    return offsets, out_idx, out_dist


# ---------------------------------------------------------------------------
# Poisson-disk dart throwing
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _any_accepted_within(coords, perm, split_dim, split_val, left, right, start, end,
                         accepted, qx, qy, qz, r2, node_stack):
    top = 0
    node_stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = node_stack[top]
        while split_dim[node] >= 0:
            dim = split_dim[node]
            if dim == 0:
                diff = qx - split_val[node]
            elif dim == 1:
                diff = qy - split_val[node]
            else:
                diff = qz - split_val[node]
            if diff < 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            if diff * diff <= r2:
                node_stack[top] = far
                top += 1
            node = near
        for t in range(start[node], end[node]):
            i = perm[t]
            if accepted[i] == 0:
                continue
            dx = coords[i, 0] - qx
            dy = coords[i, 1] - qy
            dz = coords[i, 2] - qz
            if dx * dx + dy * dy + dz * dz <= r2:
                return True
    return False


@njit(cache=True)
def poisson_disk(coords, order, radius):
    """Dart throwing over a fixed candidate order; keeps points pairwise > radius apart."""
    n = coords.shape[0]
    r2 = radius * radius
    perm, split_dim, split_val, left, right, start, end = build_tree(coords, 16)
    accepted = np.zeros(n, dtype=np.uint8)
    out = np.empty(n, dtype=np.int64)
    node_stack = np.empty(_STACK, dtype=np.int64)
    count = 0
    for t in range(n):
        i = order[t]
        if not _any_accepted_within(coords, perm, split_dim, split_val, left, right,
                                    start, end, accepted,
                                    coords[i, 0], coords[i, 1], coords[i, 2], r2, node_stack):
            accepted[i] = 1
            out[count] = i
            count += 1
    return out[:count]


# ---------------------------------------------------------------------------
# Farthest point sampling
# ---------------------------------------------------------------------------

@njit(cache=True)
def farthest_point(coords, m, start_index):
    """Greedy max-min selection; ties resolved toward the smaller index."""
    n = coords.shape[0]
    out = np.empty(m, dtype=np.int64)
    best = np.full(n, np.inf)
    out[0] = start_index
    cur = start_index
    for i in range(1, m):
        cx = coords[cur, 0]
        cy = coords[cur, 1]
        cz = coords[cur, 2]
        far = -1.0
        arg = -1
        for j in range(n):
            dx = coords[j, 0] - cx
            dy = coords[j, 1] - cy
            dz = coords[j, 2] - cz
            d = dx * dx + dy * dy + dz * dz
            if d < best[j]:
                best[j] = d
            if best[j] > far:
                far = best[j]
                arg = j
        out[i] = arg
        cur = arg
    return out


# ---------------------------------------------------------------------------
# Scatter-add (backward of neighbor gathering)
# ---------------------------------------------------------------------------

@njit(cache=True)
def scatter_add(out, idx, grad):
    q, k = idx.shape
    c = grad.shape[2]
    for row in range(q):
        for j in range(k):
            i = idx[row, j]
            for ch in range(c):
                out[i, ch] += grad[row, j, ch]
