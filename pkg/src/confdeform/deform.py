"""Discrete conformal deformation to a prescribed curvature.

The deformation lives on a state (T', l_{T'}, w): the current triangulation,
base edge lengths that depend only on the initial metric and the flip
history, and a per-vertex conformal factor.  The scaled metric is
e^{w(u)+w(v)} l(e).  Newton steps move w; along each move the path is a line
segment in the variables x = e^{-2w}, where the Delaunay condition of every
edge is a linear functional, so cocircular events are exact segment-plane
intersections handled by Ptolemy switches.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BadTarget,
    BadTargetSum,
    BoundaryEdge,
    MaxIterExceeded,
    NotCocircular,
    NotDelaunayAtStart,
    SingularBeyondNullspace,
    SwitchCapExceeded,
    UnflippableConfiguration,
)
from .halfedge import HalfedgeSurface
from .metric import (
    PLMetric,
    SwitchEvent,
    corner_angles,
    make_delaunay,
    vertex_curvatures,
)

COCIRCULAR_RTOL = 1e-9       # acceptance band for a switch, relative
WALL_RTOL = 1e-12            # numerical width of a Delaunay wall
DELAUNAY_STATE_TOL = 1e-10   # state invariant (a): T' Delaunay in the scaled metric


def scaled_length(l: float, wu: float, wv: float) -> float:
    """Vertex-scaled length e^{wu+wv} * l."""
    return float(np.exp(wu + wv) * l)


def length_cross_ratio(metric: PLMetric, e: int) -> float:
    """(l(e1) l(e1')) / (l(e2) l(e2')), invariant under vertex scaling."""
    surf = metric.surface
    if surf.is_boundary_edge(e):
        raise BoundaryEdge(f"edge {e} is on the boundary")
    q = surf.edge_quad(e)
    L = metric.lengths
    return float((L[q.e1] * L[q.e1p]) / (L[q.e2] * L[q.e2p]))


class DelaunayFunctional:
    """Per-edge linear form L_e(x) whose nonnegativity is the Delaunay
    condition of e in the scaled metric, x = e^{-2w}.

    Coefficients depend only on base lengths and connectivity; a switch
    invalidates the row of the flipped edge and of the four quad sides.
    """

    def __init__(self, surface: HalfedgeSurface, base_lengths: np.ndarray):
        self.surface = surface
        self.base = base_lengths
        n = surface.n_edges
        self.coef = np.zeros((n, 4))
        self.vert = np.zeros((n, 4), dtype=np.int64)
        self.valid = np.zeros(n, dtype=bool)
        self.refresh(range(n))

    def refresh(self, edges):
        surf, L = self.surface, self.base
        for e in edges:
            h = int(surf.edge_he[e])
            t = int(surf.twin[h])
            if surf.face_of[h] < 0 or surf.face_of[t] < 0:
                self.valid[e] = False
                continue
            hn, hp = surf.next_he[h], surf.prev_he[h]
            tn, tp = surf.next_he[t], surf.prev_he[t]
            l_e = L[e]
            l1, l2 = L[surf.edge_of[hn]], L[surf.edge_of[hp]]
            l1p, l2p = L[surf.edge_of[tn]], L[surf.edge_of[tp]]
            s = l1 * l1p + l2 * l2p
            self.coef[e] = (s / (l2 * l1p), s / (l1 * l2p),
                            -l_e * l_e / (l1 * l2), -l_e * l_e / (l1p * l2p))
            self.vert[e] = (surf.origin[h], surf.origin[t],
                            surf.origin[hp], surf.origin[tp])
            self.valid[e] = True

    def value(self, x: np.ndarray) -> np.ndarray:
        return (self.coef * x[self.vert]).sum(axis=1)

    def scale(self, x: np.ndarray) -> np.ndarray:
        """Per-edge magnitude of the largest term, for tolerance scaling."""
        return np.abs(self.coef * x[self.vert]).max(axis=1)


class DeformState:
    """Current triangulation T', base lengths l_{T'}, conformal factor w and
    an optional handle to the common refinement T u T'."""

    def __init__(self, surface_T: HalfedgeSurface, surface: HalfedgeSurface,
                 base_lengths: np.ndarray, refinement=None):
        self.surface_T = surface_T
        self.surface = surface
        self.base_lengths = np.asarray(base_lengths, dtype=np.float64)
        self.w = np.zeros(surface.n_vertices)
        self.refinement = refinement
        self.functional = DelaunayFunctional(surface, self.base_lengths)
        self.switch_events: list[SwitchEvent] = []
        self.newton_iters = 0

    @classmethod
    def from_metric(cls, metric: PLMetric, with_refinement: bool = True,
                    require_delaunay: bool = True) -> "DeformState":
        """Start a deformation at w = 0 from a Delaunay metric.

        The input surface is copied twice: T stays frozen, T' mutates.
        """
        surface_T = metric.surface.copy()
        surface = metric.surface.copy()
        state = cls(surface_T, surface, metric.lengths.copy())
        if require_delaunay:
            x = _normalized_x(state.w)
            viol = state.functional.value(x)
            scale = state.functional.scale(x)
            bad = state.functional.valid & (viol < -DELAUNAY_STATE_TOL * np.maximum(scale, 1.0))
            if bad.any():
                raise NotDelaunayAtStart(
                    f"{int(bad.sum())} edges fail Delaunay; run make_delaunay first")
        if with_refinement:
            from .refinement import RefinementSurface
            state.refinement = RefinementSurface(surface_T, metric.lengths.copy(), surface)
        return state

    # ------------------------------------------------------------------

    @property
    def x(self) -> np.ndarray:
        return np.exp(-2.0 * self.w)

    def scaled_lengths(self) -> np.ndarray:
        surf = self.surface
        he = surf.edge_he
        u = surf.origin[he]
        v = surf.origin[surf.twin[he]]
        return np.exp(self.w[u] + self.w[v]) * self.base_lengths

    def scaled_metric(self) -> PLMetric:
        return PLMetric(self.surface, self.scaled_lengths(), check=False)

    def is_delaunay(self, tol: float = DELAUNAY_STATE_TOL) -> bool:
        x = _normalized_x(self.w)
        viol = self.functional.value(x)
        scale = np.maximum(self.functional.scale(x), 1.0)
        return bool((viol[self.functional.valid] >= -tol * scale[self.functional.valid]).all())


def curvature_map(state: DeformState) -> np.ndarray:
    """Vertex curvature of the scaled metric."""
    return vertex_curvatures(state.surface, state.scaled_lengths())


def curvature_jacobian(state: DeformState) -> sp.csr_matrix:
    """Sparse symmetric matrix of dK_i/dw_j.

    Interior edge between distinct vertices p, q with opposite angles
    alpha, alpha': adds cot a + cot a' to (p,p), (q,q) and its negative to
    (p,q), (q,p); boundary edges contribute their single interior cotangent;
    loop edges cancel out of the formula entirely.
    """
    surf = state.surface
    L = state.scaled_lengths()
    # cotangent opposite every interior halfedge: (a^2+b^2-c^2) / (4 area)
    he = np.arange(surf.n_halfedges)
    interior = surf.face_of >= 0
    a = L[surf.edge_of[surf.next_he[he]]]
    b = L[surf.edge_of[surf.prev_he[he]]]
    c = L[surf.edge_of[he]]
    with np.errstate(invalid="ignore"):
        s = (a + b + c) / 2
        area4 = 4.0 * np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))
        cot = (a * a + b * b - c * c) / area4
    n = surf.n_vertices
    weights = np.zeros(surf.n_edges)
    np.add.at(weights, surf.edge_of[interior], cot[interior])
    eh = surf.edge_he
    p = surf.origin[eh]
    q = surf.origin[surf.twin[eh]]
    keep = p != q  # loop edges cancel (E_ii subtraction)
    p, q, wgt = p[keep], q[keep], weights[keep]
    rows = np.concatenate([p, q, p, q])
    cols = np.concatenate([q, p, p, q])
    vals = np.concatenate([-wgt, -wgt, wgt, wgt])
    H = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return H


def energy_gradient(state: DeformState, target: np.ndarray) -> np.ndarray:
    """grad E = K(w) - K*; the target must satisfy Gauss-Bonnet."""
    target = np.asarray(target, dtype=np.float64)
    chi = state.surface.euler_characteristic()
    if abs(target.sum() - 2.0 * np.pi * chi) > 1e-6:
        raise BadTargetSum(
            f"target curvatures sum to {target.sum():.9f}, "
            f"expected 2*pi*chi = {2 * np.pi * chi:.9f}")
    return curvature_map(state) - target


def first_violation_on_segment(state: DeformState, x_start: np.ndarray,
                               x_end: np.ndarray):
    """Smallest t in (0, 1] where an edge's Delaunay functional crosses zero
    from above along x(t) = (1-t) x_start + t x_end; ties break to the lowest
    edge id.  Returns None when no edge crosses."""
    fn = state.functional
    a = fn.value(np.asarray(x_start, dtype=np.float64))
    b = fn.value(np.asarray(x_end, dtype=np.float64))
    scale = np.maximum(np.maximum(fn.scale(x_start), fn.scale(x_end)), 1e-300)
    if (a[fn.valid] < -DELAUNAY_STATE_TOL * scale[fn.valid]).any():
        raise NotDelaunayAtStart("state is not Delaunay at x_start")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = a / (a - b)
    eligible = fn.valid & (b < -WALL_RTOL * scale) & (a > b) & (t <= 1.0)
    t = np.where(eligible, np.maximum(t, 0.0), np.inf)
    if not np.isfinite(t).any():
        return None
    best = float(t.min())
    e = int(np.flatnonzero(t == best)[0])
    return best, e


def ptolemy_switch(state: DeformState, e: int) -> SwitchEvent:
    """Cocircular diagonal switch of e at the state's current w.

    Base lengths update by the Ptolemy formula (independent of w); the
    scaled metric is unchanged as a metric space.  The refinement, when
    present, is notified with the scaled quad geometry.
    """
    surf = state.surface
    if surf.is_boundary_edge(e):
        raise BoundaryEdge(f"edge {e} is on the boundary")
    x = _normalized_x(state.w)
    fn = state.functional
    val = float(fn.value(x)[e])
    scale = float(fn.scale(x)[e])
    if abs(val) > COCIRCULAR_RTOL * max(scale, 1e-300):
        raise NotCocircular(f"edge {e}: functional {val:.3e} vs scale {scale:.3e}")
    q = surf.edge_quad(e)
    if q.face == q.face_p:
        raise UnflippableConfiguration(f"edge {e}: both sides are face {q.face}")
    base = state.base_lengths
    fa_he0 = int(surf.face_he[q.face])
    fb_he0 = int(surf.face_he[q.face_p])
    w = state.w
    sl = lambda edge, p, r: float(np.exp(w[p] + w[r]) * base[edge])
    l_e = sl(e, q.u, q.v)
    l1 = sl(q.e1, q.v, q.up)
    l2 = sl(q.e2, q.up, q.u)
    l1p = sl(q.e1p, q.u, q.vp)
    l2p = sl(q.e2p, q.vp, q.v)
    new_base = (base[q.e1] * base[q.e1p] + base[q.e2] * base[q.e2p]) / base[e]
    surf.flip_edge(e)
    base[e] = new_base
    l_new = float(np.exp(w[q.up] + w[q.vp]) * new_base)
    ev = SwitchEvent(edge=e, quad=q, l_e=l_e, l1=l1, l2=l2, l1p=l1p, l2p=l2p,
                     l_new=l_new, x_u=float(x[q.u]), x_v=float(x[q.v]),
                     x_up=float(x[q.up]), x_vp=float(x[q.vp]),
                     fa_he0=fa_he0, fb_he0=fb_he0)
    state.switch_events.append(ev)
    fn.refresh({e, q.e1, q.e2, q.e1p, q.e2p})
    if state.refinement is not None:
        state.refinement.apply_switch(ev, state.scaled_lengths(), x)
    return ev


def _normalized_x(w: np.ndarray) -> np.ndarray:
    """e^{-2w} up to a global scale factor (x is projective: every consumer
    is invariant under rescaling); normalized to avoid overflow."""
    return np.exp(-2.0 * (w - w.min()))


def _w_on_segment(w1: np.ndarray, w2: np.ndarray, t: float) -> np.ndarray:
    """w with e^{-2w} = (1-t) e^{-2w1} + t e^{-2w2}, overflow-free."""
    if t <= 0.0:
        return w1.copy()
    if t >= 1.0:
        return w2.copy()
    return -0.5 * np.logaddexp(np.log1p(-t) - 2.0 * w1, np.log(t) - 2.0 * w2)


def move_to(state: DeformState, w_target: np.ndarray) -> DeformState:
    """Algorithm 2: move w along the x-segment to w_target, performing every
    cocircular switch at its crossing parameter (ascending t, ties by edge
    id).  Hard cap of 10 |E| switches."""
    w_target = np.asarray(w_target, dtype=np.float64)
    w1 = state.w.copy()
    # common shift keeps the affine x-path intact while avoiding overflow
    shift = min(w1.min(), w_target.min())
    x1 = np.exp(-2.0 * (w1 - shift))
    x2 = np.exp(-2.0 * (w_target - shift))
    fn = state.functional
    t_cur = 0.0
    cap = 10 * state.surface.n_edges
    switches = 0
    while True:
        a = fn.value(x1)
        b = fn.value(x2)
        scale = np.maximum(np.maximum(fn.scale(x1), fn.scale(x2)), 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = a / (a - b)
        eligible = fn.valid & (b < -WALL_RTOL * scale) & (a > b) & (t <= 1.0)
        t = np.where(eligible, np.maximum(t, t_cur), np.inf)
        if not np.isfinite(t).any():
            break
        t_next = float(t.min())
        e = int(np.flatnonzero(t == t_next)[0])
        state.w = _w_on_segment(w1, w_target, t_next)
        if state.refinement is not None:
            state.refinement.update_positions(_normalized_x(state.w))
        ptolemy_switch(state, e)
        t_cur = t_next
        switches += 1
        if switches > cap:
            raise SwitchCapExceeded(f"more than {cap} switches in one move")
    state.w = w_target.copy()
    if state.refinement is not None:
        state.refinement.update_positions(_normalized_x(state.w))
    return state


def newton_solve(H: sp.spmatrix, g: np.ndarray) -> np.ndarray:
    """Solve H dw = g on the zero-mean subspace.

    H is PSD with constant null space; the system is solved in bordered form
    [[H, 1], [1^T, 0]] and dw is mean-centered.  Raises
    SingularBeyondNullspace when the residual indicates a disconnected mesh.
    """
    n = H.shape[0]
    g0 = np.asarray(g, dtype=np.float64)
    g0 = g0 - g0.mean()
    if not np.any(g0):
        return np.zeros(n)
    ones = np.ones((n, 1))
    A = sp.bmat([[H, ones], [ones.T, None]], format="csc")
    rhs = np.concatenate([g0, [0.0]])
    try:
        sol = spla.spsolve(A, rhs)
    except Exception as exc:  # pragma: no cover - scipy raises various types
        raise SingularBeyondNullspace(str(exc)) from exc
    dw = sol[:n] - sol[:n].mean()
    resid = np.abs(H @ dw - g0).max()
    if not np.isfinite(dw).all() or resid > 1e-10 * max(np.abs(g0).max(), 1e-300):
        raise SingularBeyondNullspace(
            f"residual {resid:.3e}; mesh disconnected or Hessian defective")
    return dw


def check_target(state: DeformState, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (state.surface.n_vertices,):
        raise BadTarget("target must assign one curvature per vertex")
    if not np.isfinite(target).all():
        raise BadTarget("target curvatures must be finite")
    if (target >= 2.0 * np.pi).any():
        raise BadTarget("target curvatures must be < 2*pi")
    if state.surface.has_boundary:
        bnd = state.surface.boundary_vertex
        if (target[bnd] >= np.pi).any():
            raise BadTarget("boundary target curvatures must be < pi")
    chi = state.surface.euler_characteristic()
    if abs(target.sum() - 2.0 * np.pi * chi) > 1e-6:
        raise BadTargetSum(
            f"target curvatures sum to {target.sum():.9f}, "
            f"expected 2*pi*chi = {2 * np.pi * chi:.9f}")
    return target


def deform(state: DeformState, target: np.ndarray, epsilon: float = 1e-5,
           max_iter: int = 100, damping: float = 1.0) -> DeformState:
    """Algorithm 1: Newton-minimize the convex energy until the curvature of
    the scaled metric matches the target within epsilon (sup norm).

    The optional damping factor scales each raw Newton step; the default 1.0
    is the undamped iteration.
    """
    target = check_target(state, target)
    for _ in range(max_iter + 1):
        g = curvature_map(state) - target
        if np.abs(g).max() <= epsilon:
            self_w = state.w
            state.w = self_w - self_w.mean()
            return state
        H = curvature_jacobian(state)
        dw = newton_solve(H, g)
        w_new = state.w - damping * dw
        w_new -= w_new.mean()
        move_to(state, w_new)
        state.newton_iters += 1
    raise MaxIterExceeded(f"no convergence in {max_iter} Newton iterations")


def deform_metric(metric: PLMetric, target: np.ndarray, epsilon: float = 1e-5,
                  with_refinement: bool = True, damping: float = 1.0):
    """Convenience wrapper: Delaunay-ify a metric, deform, return
    (state, delaunay_events)."""
    work = PLMetric(metric.surface.copy(), metric.lengths.copy(), check=False)
    work, del_events = make_delaunay(work)
    state = DeformState.from_metric(work, with_refinement=with_refinement)
    deform(state, target, epsilon=epsilon, damping=damping)
    return state, del_events
