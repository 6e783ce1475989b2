"""PL metrics as positive edge-length assignments.

All geometry here is intrinsic: angles, curvature and flips are computed
from edge lengths alone, vertex coordinates never enter.  A metric together
with a triangulation is valid when every face satisfies the strict triangle
inequalities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundaryEdge,
    DegenerateTriangle,
    FlipLimitExceeded,
    NonConvexQuad,
)
from .halfedge import EdgeQuad, HalfedgeSurface

# Triangle-inequality slack below DEGENERACY_FRACTION * perimeter counts as
# degenerate; cosine arguments are clamped to [-1, 1].
DEGENERACY_FRACTION = 1e-14
DELAUNAY_TOL = 1e-12


class PLMetric:
    """Edge-length assignment on a HalfedgeSurface.

    Lengths are stored once per edge (twin-symmetric by construction).
    """

    def __init__(self, surface: HalfedgeSurface, lengths, check: bool = True):
        self.surface = surface
        self.lengths = np.asarray(lengths, dtype=np.float64)
        if self.lengths.shape != (surface.n_edges,):
            raise ValueError("lengths must have one entry per edge")
        if check:
            self.check_triangle_inequalities()

    def check_triangle_inequalities(self):
        if (self.lengths <= 0).any() or not np.isfinite(self.lengths).all():
            raise DegenerateTriangle("edge lengths must be positive and finite")
        surf = self.surface
        for f in range(surf.n_faces):
            h0, h1, h2 = surf.face_halfedges(f)
            a = self.lengths[surf.edge_of[h0]]
            b = self.lengths[surf.edge_of[h1]]
            c = self.lengths[surf.edge_of[h2]]
            p = a + b + c
            if min(a + b - c, b + c - a, c + a - b) <= DEGENERACY_FRACTION * p:
                raise DegenerateTriangle(f"face {f} violates the triangle inequality")

    def length_of_halfedge(self, h: int) -> float:
        return float(self.lengths[self.surface.edge_of[h]])

    def copy(self) -> "PLMetric":
        return PLMetric(self.surface, self.lengths.copy(), check=False)


# ----------------------------------------------------------------------
# angles and curvature


def corner_angles(surface: HalfedgeSurface, lengths: np.ndarray) -> np.ndarray:
    """Angle at the origin corner of every interior halfedge (NaN on
    boundary halfedges).  Law of cosines with the argument clamped to
    [-1, 1]; the corner of h lies between edge(h) and edge(prev h), opposite
    edge(next h).
    """
    he = np.arange(surface.n_halfedges)
    interior = surface.face_of >= 0
    a = lengths[surface.edge_of[he]]
    b = lengths[surface.edge_of[surface.prev_he[he]]]
    c = lengths[surface.edge_of[surface.next_he[he]]]
    out = np.full(surface.n_halfedges, np.nan)
    with np.errstate(invalid="ignore"):
        cos = (a * a + b * b - c * c) / (2.0 * a * b)
    out[interior] = np.arccos(np.clip(cos[interior], -1.0, 1.0))
    return out


def corner_angle(metric: PLMetric, h: int) -> float:
    """Corner angle at origin(h) inside face(h)."""
    surf = metric.surface
    if surf.face_of[h] < 0:
        raise DegenerateTriangle(f"halfedge {h} is a boundary halfedge")
    a = metric.length_of_halfedge(h)
    b = metric.length_of_halfedge(surf.prev_he[h])
    c = metric.length_of_halfedge(surf.next_he[h])
    p = a + b + c
    if min(a + b - c, b + c - a, c + a - b) <= DEGENERACY_FRACTION * p:
        raise DegenerateTriangle("triangle inequality violated")
    return float(np.arccos(np.clip((a * a + b * b - c * c) / (2 * a * b), -1.0, 1.0)))


def opposite_angles(surface: HalfedgeSurface, lengths: np.ndarray) -> np.ndarray:
    """Per halfedge h: the angle opposite edge(h) inside face(h)."""
    ang = corner_angles(surface, lengths)
    return ang[surface.prev_he]


def vertex_curvatures(surface: HalfedgeSurface, lengths: np.ndarray) -> np.ndarray:
    """2*pi minus the cone angle at interior vertices, pi minus it at
    boundary vertices."""
    ang = corner_angles(surface, lengths)
    interior = surface.face_of >= 0
    cone = np.zeros(surface.n_vertices)
    np.add.at(cone, surface.origin[interior], ang[interior])
    base = np.where(surface.boundary_vertex, np.pi, 2.0 * np.pi)
    return base - cone


def vertex_curvature(metric: PLMetric, v: int) -> float:
    return float(vertex_curvatures(metric.surface, metric.lengths)[v])


def gauss_bonnet_defect(metric: PLMetric) -> float:
    """Sum of curvatures minus 2*pi*chi; below 1e-9 for any valid metric."""
    total = vertex_curvatures(metric.surface, metric.lengths).sum()
    return float(total - 2.0 * np.pi * metric.surface.euler_characteristic())


# ----------------------------------------------------------------------
# Delaunay predicate and flips


def is_delaunay_edge(metric: PLMetric, e: int, tol: float = DELAUNAY_TOL) -> bool:
    """True iff the two angles opposite e sum to at most pi + tol.

    Boundary edges are Delaunay by convention.
    """
    surf = metric.surface
    if surf.is_boundary_edge(e):
        return True
    h = int(surf.edge_he[e])
    alpha = corner_angle(metric, surf.prev_he[h])
    alpha_p = corner_angle(metric, surf.prev_he[surf.twin[h]])
    return alpha + alpha_p <= np.pi + tol


def non_delaunay_edges(metric: PLMetric, tol: float = DELAUNAY_TOL) -> list:
    surf = metric.surface
    opp = opposite_angles(surf, metric.lengths)
    out = []
    for e in range(surf.n_edges):
        h = surf.edge_he[e]
        t = surf.twin[h]
        if surf.face_of[h] < 0 or surf.face_of[t] < 0:
            continue
        if opp[h] + opp[t] > np.pi + tol:
            out.append(e)
    return out


def _flip_lengths(metric: PLMetric, q: EdgeQuad):
    """Lengths of the quad around q and the new diagonal |up-vp| via planar
    layout.  Raises NonConvexQuad when the diagonal would not cross e."""
    L = metric.lengths
    l_e = L[q.edge]
    l1, l2 = L[q.e1], L[q.e2]      # |v up|, |up u|
    l1p, l2p = L[q.e1p], L[q.e2p]  # |u vp|, |vp v|
    # angles at u in both faces
    th_f = corner_angle(metric, q.h)
    th_fp = corner_angle(metric, q.t_next)
    theta = th_f + th_fp
    new = np.sqrt(max(l2 * l2 + l1p * l1p - 2.0 * l2 * l1p * np.cos(theta), 0.0))
    # convexity at u and v: theta_u < pi and theta_v < pi
    th_v = corner_angle(metric, q.h_next) + corner_angle(metric, q.t)
    if theta >= np.pi or th_v >= np.pi:
        raise NonConvexQuad(f"quad of edge {q.edge} is not convex")
    if new <= 0.0:
        raise DegenerateTriangle("flip would create a zero-length diagonal")
    return l_e, l1, l2, l1p, l2p, float(new)


def geometric_flip(metric: PLMetric, e: int) -> PLMetric:
    """Diagonal switch of e keeping the PL metric fixed.

    Connectivity is flipped in place and the edge record e receives the
    length of the other diagonal of the (planar) quad.  All vertex
    curvatures are unchanged.
    """
    surf = metric.surface
    if surf.is_boundary_edge(e):
        raise BoundaryEdge(f"edge {e} is on the boundary")
    q = surf.edge_quad(e)
    _, _, _, _, _, new = _flip_lengths(metric, q)
    surf.flip_edge(e)
    metric.lengths[e] = new
    return metric


@dataclass
class SwitchEvent:
    """Record of one diagonal switch, with enough context to replay it on a
    common refinement.  Lengths are measured in the metric current at the
    instant of the switch; x holds e^{-2w} at the four quad corners (all
    ones for isometric Delaunay flips).
    """

    edge: int
    quad: EdgeQuad
    l_e: float
    l1: float
    l2: float
    l1p: float
    l2p: float
    l_new: float
    x_u: float = 1.0
    x_v: float = 1.0
    x_up: float = 1.0
    x_vp: float = 1.0
    fa_he0: int = field(default=-1)  # pre-flip face_he of quad.face
    fb_he0: int = field(default=-1)  # pre-flip face_he of quad.face_p


def make_delaunay(metric: PLMetric, tol: float = DELAUNAY_TOL, refinement=None):
    """Flip non-Delaunay edges until every interior edge passes the angle
    test.  FIFO queue with re-enqueue of the four quad sides; terminates or
    raises FlipLimitExceeded after 50 * |E| flips.

    Returns (metric, events) where events lists the switches in execution
    order.  When a refinement is supplied, each flip is pushed to it.
    """
    surf = metric.surface
    queue = deque(range(surf.n_edges))
    queued = np.ones(surf.n_edges, dtype=bool)
    events = []
    cap = 50 * surf.n_edges
    flips = 0
    while queue:
        e = queue.popleft()
        queued[e] = False
        if surf.is_boundary_edge(e) or is_delaunay_edge(metric, e, tol):
            continue
        q = surf.edge_quad(e)
        if q.face == q.face_p:
            # self-glued quad: the angle test cannot demand a flip here
            continue
        l_e, l1, l2, l1p, l2p, l_new = _flip_lengths(metric, q)
        fa_he0 = int(surf.face_he[q.face])
        fb_he0 = int(surf.face_he[q.face_p])
        surf.flip_edge(e)
        metric.lengths[e] = l_new
        ev = SwitchEvent(edge=e, quad=q, l_e=l_e, l1=l1, l2=l2, l1p=l1p, l2p=l2p,
                         l_new=l_new, fa_he0=fa_he0, fb_he0=fb_he0)
        events.append(ev)
        if refinement is not None:
            refinement.apply_switch(ev, metric.lengths, np.ones(surf.n_vertices))
        flips += 1
        if flips > cap:
            raise FlipLimitExceeded(f"exceeded {cap} flips; not terminating")
        for side in (q.e1, q.e2, q.e1p, q.e2p):
            if not queued[side]:
                queue.append(side)
                queued[side] = True
    return metric, events
