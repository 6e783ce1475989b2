"""Small planar-geometry helpers shared by the refinement, layout and
report modules: triangle charts, circumcircles, barycentric conversions and
the circumcircle-preserving projective map in homogeneous form."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateTriangle


def cross2(a, b) -> float:
    """2D cross product (z component)."""
    return float(a[0] * b[1] - a[1] * b[0])


def layout_triangle(s0: float, s1: float, s2: float) -> np.ndarray:
    """Place a triangle with side lengths |P0P1| = s0, |P1P2| = s1,
    |P2P0| = s2 at P0 = origin, P1 on +x, P2 above."""
    x = (s0 * s0 + s2 * s2 - s1 * s1) / (2.0 * s0)
    y2 = s2 * s2 - x * x
    if y2 <= 0.0:
        if y2 < -1e-12 * max(s0, s1, s2) ** 2:
            raise DegenerateTriangle(f"sides ({s0}, {s1}, {s2}) are degenerate")
        y2 = 0.0
    return np.array([[0.0, 0.0], [s0, 0.0], [x, np.sqrt(y2)]])


def side_lengths(pts: np.ndarray) -> np.ndarray:
    """(|P0P1|, |P1P2|, |P2P0|)."""
    return np.array([
        np.linalg.norm(pts[1] - pts[0]),
        np.linalg.norm(pts[2] - pts[1]),
        np.linalg.norm(pts[0] - pts[2]),
    ])


def circumcircle(pts: np.ndarray):
    """Center and radius of the circle through three points."""
    (ax, ay), (bx, by), (cx, cy) = pts
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        raise DegenerateTriangle("collinear points have no circumcircle")
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(pts[0] - center))


def homogeneous(pts: np.ndarray) -> np.ndarray:
    """3x3 matrix whose columns are the points in homogeneous coordinates."""
    return np.vstack([np.asarray(pts, dtype=float).T, np.ones(3)])


def barycentric(pts: np.ndarray, p) -> np.ndarray:
    """Affine barycentric coordinates of p with respect to a triangle."""
    M = homogeneous(pts)
    return np.linalg.solve(M, np.array([p[0], p[1], 1.0]))


def from_barycentric(pts: np.ndarray, bary) -> np.ndarray:
    b = np.asarray(bary, dtype=float)
    return b @ np.asarray(pts, dtype=float)


def corner_ratios(pts: np.ndarray) -> np.ndarray:
    """Per corner i: product of the two side lengths at i over the opposite
    side; the quantity whose ratio between two triangles gives the factors
    of the circumcircle-preserving projective map."""
    s = side_lengths(pts)  # s0 = 01, s1 = 12, s2 = 20
    return np.array([s[0] * s[2] / s[1], s[1] * s[0] / s[2], s[2] * s[1] / s[0]])


def cppm_factors(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """Per-corner multipliers of the circumcircle-preserving projective map
    from src to dst, playing the role of e^{-2w} in barycentric form."""
    return corner_ratios(src_pts) / corner_ratios(dst_pts)


def cppm_matrix(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """Homogeneous 3x3 matrix of the circumcircle-preserving projective map
    sending the corners of src to the corners of dst."""
    mu = cppm_factors(src_pts, dst_pts)
    Ms = homogeneous(src_pts)
    Mt = homogeneous(dst_pts)
    return Mt @ np.diag(mu) @ np.linalg.inv(Ms)


def apply_homogeneous(M: np.ndarray, p) -> np.ndarray:
    q = M @ np.array([p[0], p[1], 1.0])
    return q[:2] / q[2]


def segment_intersection(p0, p1, q0, q1):
    """Parameters (s, t) with p0 + s (p1 - p0) = q0 + t (q1 - q0), or None
    for (near-)parallel segments.  Parameters are unclamped."""
    d1 = np.asarray(p1, dtype=float) - p0
    d2 = np.asarray(q1, dtype=float) - q0
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    scale = max(np.abs(d1).max(), np.abs(d2).max())
    if abs(denom) <= 1e-14 * scale * scale:
        return None
    r = np.asarray(q0, dtype=float) - p0
    s = (r[0] * d2[1] - r[1] * d2[0]) / denom
    t = (r[0] * d1[1] - r[1] * d1[0]) / denom
    return float(s), float(t)


def point_segment(p, a, b):
    """(parameter along ab of the closest point, distance)."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return 0.0, float(np.linalg.norm(np.asarray(p) - a))
    t = float((np.asarray(p) - a) @ d / L2)
    proj = a + t * d
    return t, float(np.linalg.norm(np.asarray(p) - proj))


def polygon_area(pts) -> float:
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def point_in_polygon(pts, p) -> bool:
    """Ray-casting test (points exactly on the boundary are unreliable)."""
    pts = np.asarray(pts, dtype=float)
    x, y = float(p[0]), float(p[1])
    inside = False
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
            if x < xi:
                inside = not inside
    return inside


def similarity_align(u: np.ndarray, target: np.ndarray, weights=None):
    """Least-squares similarity (rotation + scale + translation) of u onto
    target; returns the aligned copy of u.

    Solved as a complex linear least-squares problem in (a, b): a u + b.
    """
    u = np.asarray(u, dtype=float)
    target = np.asarray(target, dtype=float)
    zu = u[:, 0] + 1j * u[:, 1]
    zt = target[:, 0] + 1j * target[:, 1]
    w = np.ones(len(u)) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    A = np.stack([zu * sw, sw], axis=1)
    coef, *_ = np.linalg.lstsq(A, zt * sw, rcond=None)
    za = coef[0] * zu + coef[1]
    return np.stack([za.real, za.imag], axis=1)
