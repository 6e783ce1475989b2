"""Shared mesh generators for the test suite.

All generators return (triangles, positions) or ready (surface, metric)
pairs; lengths always satisfy strict triangle inequalities.
"""

import numpy as np

from confdeform.halfedge import build_from_triangles
from confdeform.metric import PLMetric


def tetrahedron(perturb=0.0, seed=0):
    tris = [(0, 1, 2), (0, 2, 3), (0, 3, 1), (1, 3, 2)]
    surf = build_from_triangles(tris)
    lengths = np.ones(surf.n_edges)
    if perturb:
        rng = np.random.default_rng(seed)
        lengths *= 1.0 + perturb * (2 * rng.random(surf.n_edges) - 1)
    return surf, PLMetric(surf, lengths)


def single_triangle(a=1.0, b=1.0, c=1.0):
    surf = build_from_triangles([(0, 1, 2)])
    # edge order: by canonical halfedge -> edges (0-1, 1-2, 2-0)
    lengths = np.array([a, b, c], dtype=float)
    return surf, PLMetric(surf, lengths)


def pillow():
    """Two triangles glued along all three edges: a sphere with |V|=3."""
    surf = build_from_triangles([(0, 1, 2), (0, 2, 1)])
    return surf, PLMetric(surf, np.ones(surf.n_edges))


def square_two_triangles(diagonal="02"):
    """Unit square 0-1-2-3 (ccw) split by one diagonal."""
    if diagonal == "02":
        tris = [(0, 1, 2), (0, 2, 3)]
    else:
        tris = [(0, 1, 3), (1, 2, 3)]
    surf = build_from_triangles(tris)
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    lengths = edge_lengths_from_positions(surf, pos)
    return surf, PLMetric(surf, lengths), pos


def edge_lengths_from_positions(surf, pos):
    pos = np.asarray(pos, dtype=float)
    he = surf.edge_he
    u = surf.origin[he]
    v = surf.origin[surf.twin[he]]
    return np.linalg.norm(pos[u] - pos[v], axis=1)


def uv_sphere(n_lat=8, n_lon=12, radius=1.0):
    """Lat-long sphere with polar fans; returns (surface, metric, positions)."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append((radius * np.sin(th) * np.cos(ph),
                          radius * np.sin(th) * np.sin(ph),
                          radius * np.cos(th)))
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1
    idx = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)
    tris = []
    for j in range(n_lon):
        tris.append((0, idx(1, j), idx(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = idx(i, j), idx(i, j + 1)
            c, d = idx(i + 1, j), idx(i + 1, j + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    for j in range(n_lon):
        tris.append((south, idx(n_lat - 1, j + 1), idx(n_lat - 1, j)))
    pos = np.asarray(verts)
    surf = build_from_triangles(tris)
    return surf, PLMetric(surf, edge_lengths_from_positions(surf, pos)), pos


def random_sphere(n=100, seed=0):
    """Convex hull of random points on the unit sphere (chi = 2)."""
    from scipy.spatial import ConvexHull
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    hull = ConvexHull(pts)
    tris = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        a, b, c = simplex
        n_out = eq[:3]
        if np.dot(np.cross(pts[b] - pts[a], pts[c] - pts[a]), n_out) < 0:
            a, b = b, a
        tris.append((a, b, c))
    surf = build_from_triangles(tris)
    return surf, PLMetric(surf, edge_lengths_from_positions(surf, pts)), pts


def torus_grid(n=8, m=8, R=2.0, r=1.0):
    idx = lambda i, j: (i % n) * m + (j % m)
    tris = []
    for i in range(n):
        for j in range(m):
            tris.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            tris.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    pos = np.zeros((n * m, 3))
    for i in range(n):
        for j in range(m):
            u, v = 2 * np.pi * i / n, 2 * np.pi * j / m
            pos[idx(i, j)] = ((R + r * np.cos(v)) * np.cos(u),
                              (R + r * np.cos(v)) * np.sin(u),
                              r * np.sin(v))
    surf = build_from_triangles(tris)
    return surf, PLMetric(surf, edge_lengths_from_positions(surf, pos)), pos


def genus2(n=6, m=6):
    """Two grid tori minus one face each, glued along the boundary triangle.

    Combinatorial construction; metric is unit lengths (valid for any
    triangulation).
    """
    def torus_tris(n, m, off):
        idx = lambda i, j: off + (i % n) * m + (j % m)
        tris = []
        for i in range(n):
            for j in range(m):
                tris.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
                tris.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
        return tris

    t1 = torus_tris(n, m, 0)
    t2 = torus_tris(n, m, n * m)
    a = t1.pop(0)
    b = t2.pop(0)
    # glue: identify the boundary triangle of copy 2 with copy 1's, reversed
    remap = {b[0]: a[0], b[1]: a[2], b[2]: a[1]}
    t2 = [tuple(remap.get(v, v) for v in tri) for tri in t2]
    tris = t1 + t2
    used = sorted({v for tri in tris for v in tri})
    dense = {v: i for i, v in enumerate(used)}
    tris = [tuple(dense[v] for v in tri) for tri in tris]
    surf = build_from_triangles(tris)
    assert surf.euler_characteristic() == -2
    return surf, PLMetric(surf, np.ones(surf.n_edges))


def disk_grid(n=6, jitter=0.0, seed=0):
    """Triangulated unit-disk-ish grid patch (chi = 1)."""
    rng = np.random.default_rng(seed)
    pts, index = [], {}
    k = 0
    for i in range(n + 1):
        for j in range(n + 1):
            x, y = i / n - 0.5, j / n - 0.5
            if x * x + y * y <= 0.26:
                if jitter and 0 < i < n and 0 < j < n:
                    x += jitter * (rng.random() - 0.5) / n
                    y += jitter * (rng.random() - 0.5) / n
                index[(i, j)] = k
                pts.append((x, y, 0.0))
                k += 1
    tris = []
    for i in range(n):
        for j in range(n):
            q = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            if all(c in index for c in q):
                a, b, c, d = (index[c] for c in q)
                tris.append((a, b, c))
                tris.append((a, c, d))
    used = sorted({v for tri in tris for v in tri})
    dense = {v: i for i, v in enumerate(used)}
    tris = [tuple(dense[v] for v in tri) for tri in tris]
    pos = np.asarray(pts)[used]
    surf = build_from_triangles(tris)
    assert surf.euler_characteristic() == 1
    return surf, PLMetric(surf, edge_lengths_from_positions(surf, pos)), pos


def disk_fan(k=6):
    """k triangles around a center, boundary a k-gon (chi = 1)."""
    tris = [(0, 1 + i, 1 + (i + 1) % k) for i in range(k)]
    surf = build_from_triangles(tris)
    ang = 2 * np.pi * np.arange(k) / k
    pos = np.zeros((k + 1, 3))
    pos[1:, 0] = np.cos(ang)
    pos[1:, 1] = np.sin(ang)
    return surf, PLMetric(surf, edge_lengths_from_positions(surf, pos)), pos


def annulus_grid(n=12, m=4, r0=1.0, r1=2.0):
    """Triangulated annulus (chi = 0, two boundary loops)."""
    idx = lambda i, j: (i % n) * (m + 1) + j
    tris = []
    for i in range(n):
        for j in range(m):
            a, b = idx(i, j), idx(i + 1, j)
            c, d = idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    pos = np.zeros((n * (m + 1), 3))
    for i in range(n):
        for j in range(m + 1):
            rad = r0 + (r1 - r0) * j / m
            th = 2 * np.pi * i / n
            pos[idx(i, j)] = (rad * np.cos(th), rad * np.sin(th), 0.0)
    surf = build_from_triangles(tris)
    assert surf.euler_characteristic() == 0
    return surf, PLMetric(surf, edge_lengths_from_positions(surf, pos)), pos


def random_zero_sum_target(surf, sigma=0.3, seed=0, boundary_margin=0.2):
    """Random Gauss-Bonnet-consistent target with entries < 2*pi
    (< pi on the boundary)."""
    rng = np.random.default_rng(seed)
    chi = surf.euler_characteristic()
    n = surf.n_vertices
    t = rng.normal(scale=sigma, size=n)
    t += (2 * np.pi * chi - t.sum()) / n
    hi = np.where(surf.boundary_vertex, np.pi - boundary_margin, 2 * np.pi - boundary_margin)
    for _ in range(200):
        over = t > hi
        if not over.any():
            break
        t[over] = hi[over]
        free = ~over
        t[free] += (2 * np.pi * chi - t.sum()) / free.sum()
    assert abs(t.sum() - 2 * np.pi * chi) < 1e-9
    return t
