"""Compiled inner loops for the path solvers.

Metric codes: 0 Euclidean, 1 torus, 2 free-on-boundary.
"""
import math

import numpy as np
from numba import njit

EUCLIDEAN, TORUS, FREE = 0, 1, 2
_GAIN_TOL = 1e-12


@njit(cache=True, inline="always")
def bdist(x, y):
    return min(min(x, 1.0 - x), min(y, 1.0 - y))


@njit(cache=True, inline="always")
def dist(ax, ay, bx, by, metric):
    dx = abs(ax - bx)
    dy = abs(ay - by)
    if metric == TORUS:
        if dx > 0.5:
            dx = 1.0 - dx
        if dy > 0.5:
            dy = 1.0 - dy
        return math.sqrt(dx * dx + dy * dy)
    e = math.sqrt(dx * dx + dy * dy)
    if metric == FREE:
        return min(e, bdist(ax, ay) + bdist(bx, by))
    return e


@njit(cache=True)
def path_length(xs, ys, order, metric):
    total = 0.0
    for i in range(order.shape[0] - 1):
        a = order[i]
        b = order[i + 1]
        total += dist(xs[a], ys[a], xs[b], ys[b], metric)
    return total


@njit(cache=True)
def dist_matrix(xs, ys, metric):
    n = xs.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = dist(xs[i], ys[i], xs[j], ys[j], metric)
            D[i, j] = d
            D[j, i] = d
    return D


@njit(cache=True, nogil=True)
def held_karp(D):
    """Shortest Hamiltonian path with free endpoints.

    ``best[mask, v]`` is the cheapest path visiting exactly ``mask`` and
    ending at ``v``; the virtual start reaches every vertex at zero cost.
    """
    n = D.shape[0]
    full = (1 << n) - 1
    best = np.full((1 << n, n), np.inf)
    parent = np.full((1 << n, n), -1, dtype=np.int8)
    for v in range(n):
        best[1 << v, v] = 0.0
    for mask in range(1, full + 1):
        for v in range(n):
            if not (mask >> v) & 1:
                continue
            cur = best[mask, v]
            if cur == np.inf:
                continue
            for u in range(n):
                if (mask >> u) & 1:
                    continue
                nm = mask | (1 << u)
                cand = cur + D[v, u]
                if cand < best[nm, u]:
                    best[nm, u] = cand
                    parent[nm, u] = v
    end = 0
    for v in range(1, n):
        if best[full, v] < best[full, end]:
            end = v
    order = np.empty(n, dtype=np.int64)
    mask = full
    v = end
    for i in range(n - 1, -1, -1):
        order[i] = v
        p = parent[mask, v]
        mask ^= 1 << v
        v = p
    return best[full, end], order


# ---------------------------------------------------------------------------
# nearest neighbour construction


@njit(cache=True, nogil=True)
def nearest_neighbor_path(xs, ys, metric, start):
    n = xs.shape[0]
    G = max(1, int(math.sqrt(n / 2.0)))
    h = 1.0 / G
    ncell = G * G
    cell = np.empty(n, dtype=np.int64)
    counts = np.zeros(ncell + 1, dtype=np.int64)
    for i in range(n):
        cx = min(int(xs[i] * G), G - 1)
        cy = min(int(ys[i] * G), G - 1)
        cell[i] = cy * G + cx
        counts[cell[i] + 1] += 1
    start_of = np.cumsum(counts)
    live = np.zeros(ncell, dtype=np.int64)
    items = np.empty(n, dtype=np.int64)
    slot = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = cell[i]
        k = start_of[c] + live[c]
        items[k] = i
        slot[i] = k
        live[c] += 1

    # boundary-ordered list used by the free metric
    bd = np.empty(n)
    for i in range(n):
        bd[i] = bdist(xs[i], ys[i])
    border = np.argsort(bd, kind="mergesort")
    bptr = 0
    visited = np.zeros(n, dtype=np.bool_)

    order = np.empty(n, dtype=np.int64)
    cur = start
    for step in range(n):
        order[step] = cur
        visited[cur] = True
        c = cell[cur]
        last = start_of[c] + live[c] - 1
        moved = items[last]
        items[slot[cur]] = moved
        slot[moved] = slot[cur]
        items[last] = cur
        slot[cur] = last
        live[c] -= 1
        if step == n - 1:
            break
        px = xs[cur]
        py = ys[cur]
        best = np.inf
        besti = -1
        if metric == FREE:
            while visited[border[bptr]]:
                bptr += 1
            q = border[bptr]
            best = dist(px, py, xs[q], ys[q], metric)
            besti = q
        pcx = c % G
        pcy = c // G
        rmax = G // 2 + 1 if metric == TORUS else G
        for r in range(rmax + 1):
            for oy in range(-r, r + 1):
                for ox in range(-r, r + 1):
                    if max(abs(ox), abs(oy)) != r:
                        continue
                    gx = pcx + ox
                    gy = pcy + oy
                    if metric == TORUS:
                        gx %= G
                        gy %= G
                    elif gx < 0 or gy < 0 or gx >= G or gy >= G:
                        continue
                    cc = gy * G + gx
                    s0 = start_of[cc]
                    for k in range(s0, s0 + live[cc]):
                        q = items[k]
                        d = dist(px, py, xs[q], ys[q], metric)
                        if d < best or (d == best and q < besti):
                            best = d
                            besti = q
            if besti >= 0 and best < r * h:
                break
        cur = besti
    return order


# ---------------------------------------------------------------------------
# 2-opt with neighbour lists on a cycle closed through a zero-cost dummy node


@njit(cache=True, inline="always")
def _d(xs, ys, a, b, metric, dummy):
    if a == dummy or b == dummy:
        return 0.0
    return dist(xs[a], ys[a], xs[b], ys[b], metric)


@njit(cache=True)
def _reverse(tour, pos, i, j, m):
    # reverse the cyclic run tour[i..j]; the shorter side is flipped instead
    length = (j - i) % m + 1
    if 2 * length > m:
        i, j = (j + 1) % m, (i - 1) % m
        length = m - length
    for k in range(length // 2):
        p = (i + k) % m
        q = (j - k) % m
        a = tour[p]
        b = tour[q]
        tour[p] = b
        tour[q] = a
        pos[b] = p
        pos[a] = q


@njit(cache=True, nogil=True)
def two_opt(xs, ys, path, cand, metric, max_passes):
    n = xs.shape[0]
    m = n + 1
    dummy = n
    tour = np.empty(m, dtype=np.int64)
    tour[:n] = path
    tour[n] = dummy
    pos = np.empty(m, dtype=np.int64)
    for i in range(m):
        pos[tour[i]] = i
    queue = np.empty(n, dtype=np.int64)
    active = np.ones(n, dtype=np.bool_)
    for i in range(n):
        queue[i] = path[i]
    head = 0
    size = n
    budget = max_passes * n
    processed = 0
    moves = 0
    K = cand.shape[1]
    while size > 0 and processed < budget:
        a = queue[head]
        head = (head + 1) % n
        size -= 1
        active[a] = False
        processed += 1
        improved = False
        for direction in range(2):
            pa = pos[a]
            b = tour[(pa + 1) % m] if direction == 0 else tour[(pa - 1) % m]
            d_ab = _d(xs, ys, a, b, metric, dummy)
            for kk in range(K):
                c = cand[a, kk]
                if c < 0:
                    break
                d_ac = dist(xs[a], ys[a], xs[c], ys[c], metric)
                if d_ac >= d_ab:
                    break
                pc = pos[c]
                dn = tour[(pc + 1) % m] if direction == 0 else tour[(pc - 1) % m]
                if c == b or dn == a:
                    continue
                gain = d_ab + _d(xs, ys, c, dn, metric, dummy) - d_ac - _d(xs, ys, b, dn, metric, dummy)
                if gain > _GAIN_TOL:
                    if direction == 0:
                        _reverse(tour, pos, pos[b], pos[c], m)
                    else:
                        _reverse(tour, pos, pos[a], pos[dn], m)
                    moves += 1
                    for v in (a, b, c, dn):
                        if v != dummy and not active[v]:
                            active[v] = True
                            queue[(head + size) % n] = v
                            size += 1
                    improved = True
                    break
            if improved:
                break
    out = np.empty(n, dtype=np.int64)
    p = pos[dummy]
    for i in range(n):
        out[i] = tour[(p + 1 + i) % m]
    return out, moves, processed


@njit(cache=True)
def free_candidates(xs, ys, eucl, k):
    """Merge Euclidean neighbours with the boundary-nearest points.

    Under the free metric the k nearest points of ``p`` always lie among
    its k Euclidean nearest and the k points closest to the boundary.
    """
    n = xs.shape[0]
    b = np.empty(n)
    for i in range(n):
        b[i] = bdist(xs[i], ys[i])
    border = np.argsort(b, kind="mergesort")[: k + 1]
    kk = min(k, n - 1)
    out = np.full((n, k), -1, dtype=np.int64)
    pool = np.empty(eucl.shape[1] + border.shape[0], dtype=np.int64)
    dv = np.empty(pool.shape[0])
    for i in range(n):
        cnt = 0
        for q in eucl[i]:
            if q != i and q < n:
                pool[cnt] = q
                cnt += 1
        for q in border:
            if q == i:
                continue
            dup = False
            for t in range(cnt):
                if pool[t] == q:
                    dup = True
                    break
            if not dup:
                pool[cnt] = q
                cnt += 1
        for t in range(cnt):
            q = pool[t]
            dv[t] = dist(xs[i], ys[i], xs[q], ys[q], FREE)
        # selection by (distance, index)
        for s in range(min(kk, cnt)):
            best = s
            for t in range(s + 1, cnt):
                if dv[t] < dv[best] or (dv[t] == dv[best] and pool[t] < pool[best]):
                    best = t
            dv[s], dv[best] = dv[best], dv[s]
            pool[s], pool[best] = pool[best], pool[s]
            out[i, s] = pool[s]
    return out
