"""Doubling a bounded surface, prescribing curvature across the double,
verifying the mirror symmetry of the deformed factor, and cutting one copy
back out along the (possibly triangle-crossed) seam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .deform import DeformState
from .errors import BadTarget, NoBoundary, SymmetryViolation
from .halfedge import HalfedgeSurface, build_from_face_edges
from .metric import PLMetric, corner_angles
from .refinement import CROSS


@dataclass
class DoubledSurface:
    """Closed double of a bounded surface with its mirror involution.

    Copy-A elements keep the original ids; interior copy-B vertices are
    appended after them, so strictly-interior copy membership is decided by
    `v < n_vertices_A` (seam vertices are shared and fixed by the mirror).
    """

    surface: HalfedgeSurface
    vertex_mirror: np.ndarray
    halfedge_mirror: np.ndarray
    edge_mirror: np.ndarray
    face_mirror: np.ndarray
    seam_edges: np.ndarray      # edge ids of the glued boundary
    n_vertices_A: int
    n_faces_A: int
    edge_source: np.ndarray     # edge of the double -> edge of the input

    def is_seam_vertex(self, v: int) -> bool:
        return bool(self.vertex_mirror[v] == v)


def double(m: HalfedgeSurface, metric: PLMetric):
    """Glue two mirrored copies of a bounded surface along its boundary.

    The identification is the identity pairing of boundary vertices and
    edges; the doubled metric is exactly mirror-invariant (lengths stored
    once per orbit).  Returns (DoubledSurface, PLMetric).
    """
    if not m.has_boundary:
        raise NoBoundary("surface has no boundary to double")
    interior = np.flatnonzero(m.face_of >= 0)
    n_int = len(interior)
    a_of = {int(h): i for i, h in enumerate(interior)}

    n_v = m.n_vertices
    boundary = m.boundary_vertex
    vmap = np.full(n_v, -1, dtype=np.int64)  # vertex id in copy B
    nxt = n_v
    for v in range(n_v):
        if boundary[v]:
            vmap[v] = v
        else:
            vmap[v] = nxt
            nxt += 1
    n_total_v = nxt

    next_he = np.empty(2 * n_int, dtype=np.int64)
    twin = np.empty(2 * n_int, dtype=np.int64)
    origin = np.empty(2 * n_int, dtype=np.int64)
    face_of = np.empty(2 * n_int, dtype=np.int64)
    nf = m.n_faces
    for h in interior:
        h = int(h)
        a = a_of[h]
        b = a + n_int
        origin[a] = m.origin[h]
        next_he[a] = a_of[int(m.next_he[h])]
        face_of[a] = m.face_of[h]
        # the mirrored halfedge runs head -> tail in the reflected copy
        origin[b] = vmap[m.head(h)]
        next_he[b] = a_of[int(m.prev_he[h])] + n_int
        face_of[b] = m.face_of[h] + nf
        t = int(m.twin[h])
        if m.face_of[t] >= 0:
            twin[a] = a_of[t]
            twin[b] = a_of[t] + n_int
        else:
            twin[a] = b   # seam: glue to the mirrored copy
            twin[b] = a

    surf = HalfedgeSurface(next_he, twin, origin, face_of)
    surf.assert_valid()

    he_mirror = np.concatenate([np.arange(n_int) + n_int, np.arange(n_int)])
    vertex_mirror = np.arange(n_total_v, dtype=np.int64)
    for v in range(n_v):
        if not boundary[v]:
            vertex_mirror[v] = vmap[v]
            vertex_mirror[vmap[v]] = v
    edge_mirror = surf.edge_of[he_mirror[surf.edge_he]]
    face_mirror = surf.face_of[he_mirror[surf.face_he]]
    seam = np.flatnonzero(edge_mirror == np.arange(surf.n_edges))

    edge_source = np.empty(surf.n_edges, dtype=np.int64)
    lengths = np.empty(surf.n_edges)
    for e in range(surf.n_edges):
        h = int(surf.edge_he[e])
        if h >= n_int:
            h = int(he_mirror[h])
        src = int(m.edge_of[interior[h]])
        edge_source[e] = src
        lengths[e] = metric.lengths[src]

    dbl = DoubledSurface(surface=surf, vertex_mirror=vertex_mirror,
                         halfedge_mirror=he_mirror, edge_mirror=edge_mirror,
                         face_mirror=face_mirror, seam_edges=seam,
                         n_vertices_A=n_v, n_faces_A=nf,
                         edge_source=edge_source)
    return dbl, PLMetric(surf, lengths)


def doubled_target(target: np.ndarray, m: HalfedgeSurface,
                   dbl: DoubledSurface) -> np.ndarray:
    """Prescribed curvature on the double: doubled at boundary vertices,
    copied to both mirror images in the interior."""
    target = np.asarray(target, dtype=np.float64)
    chi = m.euler_characteristic()
    if abs(target.sum() - 2 * np.pi * chi) > 1e-6:
        raise BadTarget(
            f"target sums to {target.sum():.9f}, expected {2 * np.pi * chi:.9f}")
    boundary = m.boundary_vertex
    if (target >= 2 * np.pi).any():
        raise BadTarget("target curvatures must be < 2*pi")
    if (target[boundary] >= np.pi).any():
        raise BadTarget("boundary target curvatures must be < pi")
    out = np.empty(dbl.surface.n_vertices)
    for v in range(m.n_vertices):
        if boundary[v]:
            out[v] = 2.0 * target[v]
        else:
            out[v] = target[v]
            out[dbl.vertex_mirror[v]] = target[v]
    chi_d = dbl.surface.euler_characteristic()
    assert abs(out.sum() - 2 * np.pi * chi_d) < 1e-6
    return out


@dataclass
class SymmetryReport:
    max_w_mismatch: float
    seam_records: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def passes(self, tol: float = 1e-6) -> bool:
        return self.max_w_mismatch <= tol and not self.violations


def _seam_chain(state: DeformState, seam_edge: int):
    """(crossing T'-faces, crossed T'-edges) along a seam segment, via the
    refinement of its frozen T-edge; both empty when the segment is still an
    edge of T'."""
    r = state.refinement
    if r is None:
        raise SymmetryViolation("seam analysis requires a refinement handle")
    h = int(state.surface_T.edge_he[seam_edge])
    faces, crossed = [], []
    for rh in r.chain(h, "T"):
        if r.r_parent_Tp[rh] >= 0:
            continue
        faces.append(int(r.f_host_Tp[r.r_face[rh]]))
        head = r.r_origin[r.r_next[rh]]
        if r.v_kind[head] == CROSS:
            crossed.append(int(state.surface.edge_of[r.v_tp_host[head]]))
    return faces, crossed


def check_symmetry(state: DeformState, dbl: DoubledSurface,
                   delaunay_flipped=()) -> SymmetryReport:
    """Verify, after deformation on the double, that the conformal factor is
    mirror-invariant and the triangulation around every seam segment has the
    paired-crossing structure (report-only)."""
    w = state.w
    rep = SymmetryReport(max_w_mismatch=float(np.abs(w - w[dbl.vertex_mirror]).max()))
    flipped = set(int(e) for e in delaunay_flipped)
    sl = state.scaled_lengths()
    ang = corner_angles(state.surface, sl)
    mirror_v = dbl.vertex_mirror
    for e in dbl.seam_edges:
        e = int(e)
        if e in flipped:
            rep.violations.append(("seam-lost-in-delaunay", e))
            continue
        faces, crossed = _seam_chain(state, e)
        if not faces:
            rep.seam_records.append(("intact", e))
            continue
        rep.seam_records.append(("crossed", e, len(faces)))
        for f in faces:
            verts = state.surface.face_vertices(f)
            paired = any(mirror_v[verts[i]] == verts[(i + 1) % 3] for i in range(3))
            if not paired:
                rep.violations.append(("crossing-face-not-mirrored", e, f))
        for g in crossed:
            a, b = state.surface.edge_endpoints(g)
            if mirror_v[a] == b:
                continue  # mirror-pair side, bisected by the seam
            # shared diagonal of a paired quad: must be cocircular
            h = int(state.surface.edge_he[g])
            t = int(state.surface.twin[h])
            s = ang[state.surface.prev_he[h]] + ang[state.surface.prev_he[t]]
            if abs(s - np.pi) > 1e-8:
                rep.violations.append(("quad-not-cocircular", e, g, float(s - np.pi)))
    return rep


def seam_straightness(state: DeformState, dbl: DoubledSurface) -> float:
    """Max imbalance of the two one-sided angle sums at seam vertices whose
    incident seam segments are intact T'-edges (crossed neighbourhoods are
    skipped: their straightness is the cocircularity check)."""
    surf = state.surface
    sl = state.scaled_lengths()
    ang = corner_angles(surf, sl)
    seam_set = set(int(e) for e in dbl.seam_edges)
    intact = {e for e in seam_set if not any(ev.edge == e for ev in state.switch_events)}
    worst = 0.0
    for v in range(dbl.n_vertices_A):
        if dbl.vertex_mirror[v] != v:
            continue
        fans = surf.vertex_halfedges(v)
        seam_out = [h for h in fans if int(surf.edge_of[h]) in intact]
        if len(seam_out) != 2:
            continue
        i0, i1 = sorted(fans.index(h) for h in seam_out)
        side1 = sum(ang[fans[i]] for i in range(i0, i1))
        side2 = sum(ang[fans[i]] for i in range(i1, len(fans))) + \
            sum(ang[fans[i]] for i in range(0, i0))
        worst = max(worst, abs(side1 - side2))
    return worst


def cut_half(state: DeformState, dbl: DoubledSurface,
             delaunay_flipped=(), tol: float = 1e-6):
    """Cut copy A of the deformed double back out.

    Crossing cocircular quads are split along the straight seam bisector
    through the midpoints of their mirror-pair sides; midpoints become
    boundary vertices with zero curvature.  Returns (surface, metric in the
    scaled metric, vertex_map) with vertex_map sending cut vertices to
    double vertices (-1 for midpoints).
    """
    rep = check_symmetry(state, dbl, delaunay_flipped)
    if not rep.passes(tol):
        raise SymmetryViolation(
            f"w mismatch {rep.max_w_mismatch:.3e}, violations: {rep.violations[:4]}")
    surf = state.surface
    sl = state.scaled_lengths()
    chains = {}
    crossing_faces = {}
    intact_seam = set()
    for e in dbl.seam_edges:
        e = int(e)
        faces, crossed = _seam_chain(state, e)
        if not faces:
            intact_seam.add(e)
            continue
        if len(faces) != len(crossed) + 1:
            raise SymmetryViolation(f"seam {e}: malformed crossing chain")
        chains[e] = (faces, crossed)
        for f in faces:
            crossing_faces[f] = e

    # flood fill over non-crossing faces, blocked at intact seam edges
    comp = np.full(surf.n_faces, -1, dtype=np.int64)
    cid = 0
    for f0 in range(surf.n_faces):
        if comp[f0] >= 0 or f0 in crossing_faces:
            continue
        stack = [f0]
        comp[f0] = cid
        while stack:
            f = stack.pop()
            for h in surf.face_halfedges(f):
                if int(surf.edge_of[h]) in intact_seam:
                    continue
                g = int(surf.face_of[surf.twin[h]])
                if g < 0 or g in crossing_faces or comp[g] >= 0:
                    continue
                comp[g] = cid
                stack.append(g)
        cid += 1
    if cid == 0:
        raise SymmetryViolation("every face crosses the seam; nothing to anchor the cut")
    score = np.zeros(cid)
    for f in range(surf.n_faces):
        if comp[f] < 0:
            continue
        for v in surf.face_vertices(f):
            if dbl.vertex_mirror[v] != v:
                score[comp[f]] += 1.0 if v < dbl.n_vertices_A else -1.0
    a_comps = {c for c in range(cid) if score[c] > 0}
    if not a_comps:
        a_comps = {int(comp[comp >= 0][0])}

    faces_out = []
    lengths_out = {}
    vertex_map = {}
    counter = [0]

    def vid(key):
        if key not in vertex_map:
            vertex_map[key] = counter[0]
            counter[0] += 1
        return vertex_map[key]

    for f in range(surf.n_faces):
        if comp[f] >= 0 and comp[f] in a_comps:
            corners = []
            for h in surf.face_halfedges(f):
                e = int(surf.edge_of[h])
                corners.append((vid(("v", int(surf.origin[h]))), ("e", e)))
                lengths_out[("e", e)] = float(sl[e])
            faces_out.append(corners)

    for e, (faces, crossed) in chains.items():
        _split_strip(state, dbl, faces, crossed, sl, faces_out, lengths_out, vid)

    cut_surface = build_from_face_edges(faces_out, counter[0])
    key_of_he = {}
    h = 0
    for face in faces_out:
        for _, k in face:
            key_of_he[h] = k
            h += 1
    lengths = np.array([lengths_out[key_of_he[int(cut_surface.edge_he[e])]]
                        for e in range(cut_surface.n_edges)])
    back = np.full(counter[0], -1, dtype=np.int64)
    for key, v in vertex_map.items():
        if key[0] == "v":
            back[v] = key[1]
    return cut_surface, PLMetric(cut_surface, lengths), back


def _split_strip(state: DeformState, dbl: DoubledSurface, faces, crossed,
                 sl, faces_out, lengths_out, vid):
    """Split the chain of T'-triangles crossing one seam segment along the
    bisector, keeping the copy-A pieces."""
    surf = state.surface
    mirror_v = dbl.vertex_mirror

    def is_A(v):
        return v < dbl.n_vertices_A

    def mirror_pair(g):
        a, b = surf.edge_endpoints(g)
        return a != b and mirror_v[a] == b

    k = 0
    while k < len(faces):
        prev_cross = crossed[k - 1] if k > 0 else None
        next_cross = crossed[k] if k < len(crossed) else None
        if prev_cross is None and next_cross is None:
            raise SymmetryViolation("single-face crossing chain is not splittable")
        if (prev_cross is None or next_cross is None):
            g = next_cross if prev_cross is None else prev_cross
            if not mirror_pair(g):
                raise SymmetryViolation("chain end is not a mirror-pair side")
            _split_end_triangle(state, faces[k], g, sl, faces_out,
                                lengths_out, vid, is_A)
            k += 1
        elif mirror_pair(prev_cross) and not mirror_pair(next_cross):
            g_next = crossed[k + 1] if k + 1 < len(crossed) else None
            if k + 1 >= len(faces) or g_next is None or not mirror_pair(g_next):
                raise SymmetryViolation("paired quad lacks its second mirror side")
            _split_quad(state, faces[k], faces[k + 1], prev_cross, next_cross,
                        g_next, sl, faces_out, lengths_out, vid, is_A)
            k += 2
        else:
            raise SymmetryViolation(f"unexpected crossing pattern at face {faces[k]}")


def _face_layout(surf, sl, f):
    cyc = surf.face_halfedges(f)
    pts = geo.layout_triangle(sl[surf.edge_of[cyc[0]]],
                              sl[surf.edge_of[cyc[1]]],
                              sl[surf.edge_of[cyc[2]]])
    return cyc, pts


def _split_end_triangle(state, f, g, sl, faces_out, lengths_out, vid, is_A):
    """Triangle (a, b, c) with mirror-pair side g = ab: the seam runs from
    the endpoint vertex c to the midpoint of ab; keep the copy-A piece."""
    surf = state.surface
    cyc, pts = _face_layout(surf, sl, f)
    i = next(idx for idx, h in enumerate(cyc) if int(surf.edge_of[h]) == g)
    a = int(surf.origin[cyc[i]])
    b = int(surf.origin[cyc[(i + 1) % 3]])
    c = int(surf.origin[cyc[(i + 2) % 3]])
    pa, pb, pc = pts[i], pts[(i + 1) % 3], pts[(i + 2) % 3]
    mid = 0.5 * (pa + pb)
    half_key = ("half", g)
    bis_key = ("bis", g, f)
    lengths_out[half_key] = 0.5 * float(sl[g])
    lengths_out[bis_key] = float(np.linalg.norm(pc - mid))
    if is_A(a) and not is_A(b):
        e_ca = int(surf.edge_of[cyc[(i + 2) % 3]])
        lengths_out[("e", e_ca)] = float(sl[e_ca])
        faces_out.append([(vid(("v", a)), half_key),
                          (vid(("mid", g)), bis_key),
                          (vid(("v", c)), ("e", e_ca))])
    elif is_A(b) and not is_A(a):
        e_bc = int(surf.edge_of[cyc[(i + 1) % 3]])
        lengths_out[("e", e_bc)] = float(sl[e_bc])
        faces_out.append([(vid(("mid", g)), half_key),
                          (vid(("v", b)), ("e", e_bc)),
                          (vid(("v", c)), bis_key)])
    else:
        raise SymmetryViolation(f"mirror side {g} has no unique copy-A endpoint")


def _split_quad(state, f1, f2, g_prev, g_shared, g_next, sl, faces_out,
                lengths_out, vid, is_A):
    """Paired crossing triangles f1, f2 sharing the cocircular diagonal
    g_shared, with mirror-pair sides g_prev and g_next: keep the copy-A half
    of the quad, cut along the bisector through the two midpoints."""
    surf = state.surface
    cyc1, pts1 = _face_layout(surf, sl, f1)
    i_sh = next(i for i, h in enumerate(cyc1) if int(surf.edge_of[h]) == g_shared)
    h_sh = cyc1[i_sh]
    t_sh = int(surf.twin[h_sh])
    if int(surf.face_of[t_sh]) != f2:
        raise SymmetryViolation("paired quad faces are not adjacent")
    cyc2 = surf.face_halfedges(f2)
    j_sh = cyc2.index(t_sh)
    B2 = pts1[i_sh]             # origin of h_sh
    A2 = pts1[(i_sh + 1) % 3]   # head of h_sh = origin of t_sh
    base = float(np.linalg.norm(B2 - A2))
    l_head = float(sl[surf.edge_of[cyc2[(j_sh + 1) % 3]]])  # head(t_sh)->third
    l_tail = float(sl[surf.edge_of[cyc2[(j_sh + 2) % 3]]])  # third->origin(t_sh)
    dirv = (B2 - A2) / base
    left = np.array([-dirv[1], dirv[0]])
    xx = (base * base + l_tail * l_tail - l_head * l_head) / (2 * base)
    yy = np.sqrt(max(l_tail * l_tail - xx * xx, 0.0))
    p_third = A2 + xx * dirv + yy * left
    third2 = int(surf.origin[cyc2[(j_sh + 2) % 3]])

    def vpos(v):
        for idx, h in enumerate(cyc1):
            if int(surf.origin[h]) == v:
                return pts1[idx]
        if v == third2:
            return p_third
        raise SymmetryViolation(f"quad vertex {v} not located")

    a_p, b_p = surf.edge_endpoints(g_prev)
    a_n, b_n = surf.edge_endpoints(g_next)
    u_A = a_p if is_A(a_p) and not is_A(b_p) else (b_p if is_A(b_p) and not is_A(a_p) else None)
    v_A = a_n if is_A(a_n) and not is_A(b_n) else (b_n if is_A(b_n) and not is_A(a_n) else None)
    if u_A is None or v_A is None:
        raise SymmetryViolation("quad mirror sides lack unique copy-A endpoints")
    m1 = 0.5 * (vpos(a_p) + vpos(b_p))
    m2 = 0.5 * (vpos(a_n) + vpos(b_n))
    pu, pv = vpos(u_A), vpos(v_A)
    e_outer = None
    for h in list(cyc1) + list(cyc2):
        aa, bb = int(surf.origin[h]), surf.head(h)
        if {aa, bb} == {u_A, v_A}:
            e_outer = int(surf.edge_of[h])
            break
    if e_outer is None:
        raise SymmetryViolation("quad has no copy-A outer edge")

    h1_key, h2_key = ("half", g_prev), ("half", g_next)
    bis_key = ("bis", g_shared)
    diag_key = ("qdiag", g_shared)
    lengths_out[h1_key] = 0.5 * float(sl[g_prev])
    lengths_out[h2_key] = 0.5 * float(sl[g_next])
    lengths_out[bis_key] = float(np.linalg.norm(m2 - m1))
    lengths_out[diag_key] = float(np.linalg.norm(pu - m2))
    lengths_out[("e", e_outer)] = float(sl[e_outer])
    quad = [pu, m1, m2, pv]
    if geo.polygon_area(quad) > 0:
        faces_out.append([(vid(("v", u_A)), h1_key),
                          (vid(("mid", g_prev)), bis_key),
                          (vid(("mid", g_next)), diag_key)])
        faces_out.append([(vid(("v", u_A)), diag_key),
                          (vid(("mid", g_next)), h2_key),
                          (vid(("v", v_A)), ("e", e_outer))])
    else:
        faces_out.append([(vid(("v", u_A)), diag_key),
                          (vid(("mid", g_next)), bis_key),
                          (vid(("mid", g_prev)), h1_key)])
        faces_out.append([(vid(("v", u_A)), ("e", e_outer)),
                          (vid(("v", v_A)), h2_key),
                          (vid(("mid", g_next)), diag_key)])
