"""Halfedge connectivity for triangulated surfaces.

The triangulations handled here need NOT be simplicial complexes: loop edges
(both endpoints equal) and parallel edges (same endpoint pair) are
first-class citizens, because diagonal switches on intrinsic metrics create
them routinely.  Consequently connectivity is stored purely through halfedge
pointers and is never recovered from vertex pairs.

Conventions:
  * every halfedge has a twin; halfedges of interior faces have face >= 0,
    boundary halfedges have face == -1 and are linked into boundary loops
    by `next`;
  * `origin[h]` is the vertex a halfedge points away from, its head is
    `origin[twin[h]]`;
  * edge ids pair the two twins and are stable: a diagonal switch reuses the
    edge record for the new diagonal, so length tables update in place;
  * indices are never recycled within a session.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryEdge,
    InconsistentOrientation,
    NonManifold,
    UnflippableConfiguration,
)

BOUNDARY = -1


@dataclass
class EdgeQuad:
    """The two triangles around an interior edge, labelled like the
    cocircular-switch figure: halfedge h runs u -> v inside face f, its twin
    runs v -> u inside face fp; up / vp are the apexes opposite e.

    Side edges counterclockwise: e1 = v-up, e2 = up-u (in f) and
    e1p = u-vp, e2p = vp-v (in fp).
    """

    edge: int
    h: int          # canonical halfedge u -> v
    h_next: int     # v -> up
    h_prev: int     # up -> u
    t: int          # twin, v -> u
    t_next: int     # u -> vp
    t_prev: int     # vp -> v
    u: int
    v: int
    up: int
    vp: int
    e1: int
    e2: int
    e1p: int
    e2p: int
    face: int
    face_p: int


class HalfedgeSurface:
    """Array-backed halfedge mesh with triangular interior faces."""

    def __init__(self, next_he, twin, origin, face_of):
        self.next_he = np.asarray(next_he, dtype=np.int64)
        self.twin = np.asarray(twin, dtype=np.int64)
        self.origin = np.asarray(origin, dtype=np.int64)
        self.face_of = np.asarray(face_of, dtype=np.int64)
        n_he = len(self.next_he)
        self.prev_he = np.empty(n_he, dtype=np.int64)
        self.prev_he[self.next_he] = np.arange(n_he)

        # edges: pair twins, canonical halfedge is the smaller index
        self.edge_of = np.full(n_he, -1, dtype=np.int64)
        reps = np.flatnonzero(np.arange(n_he) < self.twin)
        self.edge_of[reps] = np.arange(len(reps))
        self.edge_of[self.twin[reps]] = np.arange(len(reps))
        self.edge_he = reps.copy()

        self.n_vertices = int(self.origin.max()) + 1 if n_he else 0
        interior = self.face_of >= 0
        self.n_faces = int(self.face_of[interior].max()) + 1 if interior.any() else 0
        self.face_he = np.full(self.n_faces, n_he, dtype=np.int64)
        np.minimum.at(self.face_he, self.face_of[interior], np.flatnonzero(interior))
        self.vertex_out = np.full(self.n_vertices, n_he, dtype=np.int64)
        np.minimum.at(self.vertex_out, self.origin, np.arange(n_he))

    # ------------------------------------------------------------------
    # basic queries

    @property
    def n_halfedges(self) -> int:
        return len(self.next_he)

    @property
    def n_edges(self) -> int:
        return len(self.edge_he)

    def head(self, h: int) -> int:
        return int(self.origin[self.twin[h]])

    def is_boundary_halfedge(self, h: int) -> bool:
        return self.face_of[h] < 0

    def is_boundary_edge(self, e: int) -> bool:
        h = self.edge_he[e]
        return self.face_of[h] < 0 or self.face_of[self.twin[h]] < 0

    @property
    def boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        b = self.face_of < 0
        mask[self.origin[b]] = True
        return mask

    @property
    def has_boundary(self) -> bool:
        return bool((self.face_of < 0).any())

    def face_halfedges(self, f: int):
        h0 = int(self.face_he[f])
        h1 = int(self.next_he[h0])
        return h0, h1, int(self.next_he[h1])

    def face_vertices(self, f: int):
        h0, h1, h2 = self.face_halfedges(f)
        return int(self.origin[h0]), int(self.origin[h1]), int(self.origin[h2])

    def edge_endpoints(self, e: int):
        h = int(self.edge_he[e])
        return int(self.origin[h]), self.head(h)

    def vertex_halfedges(self, v: int):
        """Outgoing halfedges of v, one full rotational orbit."""
        h0 = int(self.vertex_out[v])
        out = []
        h = h0
        while True:
            out.append(h)
            h = int(self.next_he[self.twin[h]])
            if h == h0:
                break
            if len(out) > self.n_halfedges:
                raise NonManifold(f"vertex {v} orbit does not close")
        return out

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def boundary_loops(self):
        """Partition of boundary halfedges into next-cycles."""
        loops = []
        seen = set()
        for h in np.flatnonzero(self.face_of < 0):
            h = int(h)
            if h in seen:
                continue
            loop = []
            g = h
            while True:
                loop.append(g)
                seen.add(g)
                g = int(self.next_he[g])
                if g == h:
                    break
            loops.append(loop)
        return loops

    def copy(self) -> "HalfedgeSurface":
        return HalfedgeSurface(
            self.next_he.copy(), self.twin.copy(), self.origin.copy(), self.face_of.copy()
        )

    # ------------------------------------------------------------------
    # validation

    def validate(self):
        """Return a list of invariant violations (empty when valid)."""
        bad = []
        n = self.n_halfedges
        idx = np.arange(n)
        if not (self.twin[self.twin] == idx).all():
            bad.append("twin is not an involution")
        if (self.twin == idx).any():
            bad.append("twin has a fixed point")
        if len(np.unique(self.next_he)) != n:
            bad.append("next is not a permutation")
        # interior faces close in exactly 3 steps with a constant face id
        for f in range(self.n_faces):
            h0 = self.face_he[f]
            h1, h2 = self.next_he[h0], self.next_he[self.next_he[h0]]
            if self.next_he[h2] != h0:
                bad.append(f"face {f} is not a 3-cycle")
                continue
            if not (self.face_of[[h0, h1, h2]] == f).all():
                bad.append(f"face {f} has inconsistent face_of")
        # origin consistency across next
        if not (self.origin[self.next_he] == self.origin[self.twin]).all():
            bad.append("origin/next/twin mismatch")
        # every vertex is a single rotational orbit
        if (self.vertex_out >= n).any():
            bad.append("isolated vertices are not representable")
            return bad
        orbit_sizes = np.zeros(self.n_vertices, dtype=np.int64)
        seen = np.zeros(n, dtype=bool)
        for v in range(self.n_vertices):
            try:
                for h in self.vertex_halfedges(v):
                    if self.origin[h] != v:
                        bad.append(f"vertex {v} orbit leaves the vertex")
                        break
                    seen[h] = True
                    orbit_sizes[v] += 1
            except NonManifold:
                bad.append(f"vertex {v} orbit broken")
        if orbit_sizes.sum() != n or not seen.all():
            bad.append("vertex orbits do not partition the halfedges")
        return bad

    def assert_valid(self):
        bad = self.validate()
        if bad:
            raise NonManifold("; ".join(bad))

    # ------------------------------------------------------------------
    # edge quad + flip

    def edge_quad(self, e: int) -> EdgeQuad:
        h = int(self.edge_he[e])
        t = int(self.twin[h])
        if self.face_of[h] < 0 or self.face_of[t] < 0:
            raise BoundaryEdge(f"edge {e} is on the boundary")
        hn, hp = int(self.next_he[h]), int(self.prev_he[h])
        tn, tp = int(self.next_he[t]), int(self.prev_he[t])
        return EdgeQuad(
            edge=e,
            h=h, h_next=hn, h_prev=hp,
            t=t, t_next=tn, t_prev=tp,
            u=int(self.origin[h]), v=int(self.origin[t]),
            up=int(self.origin[hp]), vp=int(self.origin[tp]),
            e1=int(self.edge_of[hn]), e2=int(self.edge_of[hp]),
            e1p=int(self.edge_of[tn]), e2p=int(self.edge_of[tp]),
            face=int(self.face_of[h]), face_p=int(self.face_of[t]),
        )

    def flip_edge(self, e: int) -> EdgeQuad:
        """Replace e by the other diagonal of its quad, in place.

        Returns the pre-flip EdgeQuad.  The edge record e is reused for the
        new diagonal; face ids are reused for the two new triangles.  Flipping
        twice restores the original connectivity up to relabeling.
        """
        q = self.edge_quad(e)
        if q.face == q.face_p:
            raise UnflippableConfiguration(f"edge {e}: both sides are face {q.face}")
        h1, h2, h3 = q.h, q.h_next, q.h_prev
        t1, t2, t3 = q.t, q.t_next, q.t_prev
        fa, fb = q.face, q.face_p
        # new faces: fa = (h1: vp->up, h3: up->u, t2: u->vp)
        #            fb = (t1: up->vp, t3: vp->v, h2: v->up)
        self.origin[h1] = q.vp
        self.origin[t1] = q.up
        for a, b in ((h1, h3), (h3, t2), (t2, h1), (t1, t3), (t3, h2), (h2, t1)):
            self.next_he[a] = b
            self.prev_he[b] = a
        self.face_of[t2] = fa
        self.face_of[h2] = fb
        self.face_he[fa] = h1
        self.face_he[fb] = t1
        self.vertex_out[q.u] = t2
        self.vertex_out[q.v] = h2
        self.vertex_out[q.up] = t1
        self.vertex_out[q.vp] = h1
        return q


def build_from_triangles(triangles, n_vertices=None) -> HalfedgeSurface:
    """Build a manifold HalfedgeSurface from ordered vertex triples.

    Unmatched directed edges become boundary halfedges.  Raises NonManifold
    when an undirected edge appears in three or more triangles (or a vertex
    fan is pinched) and InconsistentOrientation when the same directed edge
    appears twice.
    """
    tris = [tuple(int(v) for v in t) for t in triangles]
    if any(len(t) != 3 for t in tris):
        raise NonManifold("faces must be triangles")
    nf = len(tris)
    if n_vertices is None:
        n_vertices = max((v for t in tris for v in t), default=-1) + 1

    n_int = 3 * nf
    origin = np.empty(n_int, dtype=np.int64)
    next_he = np.empty(n_int, dtype=np.int64)
    face_of = np.repeat(np.arange(nf, dtype=np.int64), 3)
    directed = {}
    undirected_count = {}
    for f, (a, b, c) in enumerate(tris):
        for i, (s, t) in enumerate(((a, b), (b, c), (c, a))):
            h = 3 * f + i
            origin[h] = s
            next_he[h] = 3 * f + (i + 1) % 3
            key = (s, t)
            ukey = (min(s, t), max(s, t), s == t)
            undirected_count[ukey] = undirected_count.get(ukey, 0) + 1
            if undirected_count[ukey] > 2:
                raise NonManifold(f"edge {s}-{t} appears in more than two triangles")
            if key in directed:
                raise InconsistentOrientation(f"directed edge {s}->{t} appears twice")
            directed[key] = h

    twin = np.full(n_int, -1, dtype=np.int64)
    for (s, t), h in directed.items():
        j = directed.get((t, s), -1)
        twin[h] = j

    # boundary halfedges for unmatched directed edges
    unmatched = [h for h in range(n_int) if twin[h] < 0]
    n_he = n_int + len(unmatched)
    origin = np.concatenate([origin, np.zeros(len(unmatched), dtype=np.int64)])
    next_he = np.concatenate([next_he, np.full(len(unmatched), -1, dtype=np.int64)])
    face_of = np.concatenate([face_of, np.full(len(unmatched), BOUNDARY, dtype=np.int64)])
    twin = np.concatenate([twin, np.zeros(len(unmatched), dtype=np.int64)])
    bnd_out = {}
    for k, h in enumerate(unmatched):
        b = n_int + k
        twin[h] = b
        twin[b] = h
        s, t = origin[h], origin[next_he[h]]
        origin[b] = t
        if t in bnd_out:
            raise NonManifold(f"vertex {t} is pinched (two boundary fans)")
        bnd_out[t] = b
    for k, h in enumerate(unmatched):
        b = n_int + k
        head = origin[h]
        next_he[b] = bnd_out[head]

    surf = HalfedgeSurface(next_he, twin, origin, face_of)
    if surf.n_vertices != n_vertices:
        # allow isolated trailing vertices only if the caller asked for them
        raise NonManifold("isolated vertices are not representable")
    surf.assert_valid()
    return surf


def build_from_face_edges(faces, n_vertices) -> HalfedgeSurface:
    """Build a surface from faces given as [(tail_vertex, edge_key), ...].

    Gluing is by edge key (each key appears at most twice, in opposite
    directions), which represents loop and parallel edges unambiguously.
    """
    n_int = sum(len(f) for f in faces)
    if any(len(f) != 3 for f in faces):
        raise NonManifold("faces must be triangles")
    origin = np.empty(n_int, dtype=np.int64)
    next_he = np.empty(n_int, dtype=np.int64)
    face_of = np.empty(n_int, dtype=np.int64)
    twin = np.full(n_int, -1, dtype=np.int64)
    by_key = {}
    h = 0
    for f, corners in enumerate(faces):
        base = h
        for i, (tail, key) in enumerate(corners):
            origin[h] = tail
            next_he[h] = base + (i + 1) % 3
            face_of[h] = f
            by_key.setdefault(key, []).append(h)
            h += 1
    for key, hs in by_key.items():
        if len(hs) > 2:
            raise NonManifold(f"edge key {key!r} used more than twice")
        if len(hs) == 2:
            twin[hs[0]] = hs[1]
            twin[hs[1]] = hs[0]
    unmatched = [g for g in range(n_int) if twin[g] < 0]
    n_he = n_int + len(unmatched)
    origin = np.concatenate([origin, np.zeros(len(unmatched), dtype=np.int64)])
    next_he = np.concatenate([next_he, np.full(len(unmatched), -1, dtype=np.int64)])
    face_of = np.concatenate([face_of, np.full(len(unmatched), BOUNDARY, dtype=np.int64)])
    twin = np.concatenate([twin, np.zeros(len(unmatched), dtype=np.int64)])
    bnd_out = {}
    for k, g in enumerate(unmatched):
        b = n_int + k
        twin[g] = b
        twin[b] = g
        head = origin[next_he[g]]
        origin[b] = head
        if head in bnd_out:
            raise NonManifold(f"vertex {head} is pinched (two boundary fans)")
        bnd_out[head] = b
    for k, g in enumerate(unmatched):
        b = n_int + k
        next_he[b] = bnd_out[origin[g]]
    surf = HalfedgeSurface(next_he, twin, origin, face_of)
    surf.assert_valid()
    return surf


def cut_along(surface: HalfedgeSurface, cut_edges):
    """Cut a surface open along a set of interior edges.

    Returns (cut_surface, vertex_map) where vertex_map sends each vertex of
    the cut surface to its id in the input.  Interior halfedge and face ids
    are preserved; each cut edge turns into two boundary edges (the new
    boundary halfedges are appended after the existing ones).
    """
    cut = sorted(set(int(e) for e in cut_edges))
    for e in cut:
        if surface.is_boundary_edge(e):
            raise BoundaryEdge(f"cannot cut along boundary edge {e}")
    n_old = surface.n_halfedges
    n_new = 2 * len(cut)
    next_he = np.concatenate([surface.next_he, np.full(n_new, -1, dtype=np.int64)])
    twin = np.concatenate([surface.twin, np.zeros(n_new, dtype=np.int64)])
    origin = np.concatenate([surface.origin, np.zeros(n_new, dtype=np.int64)])
    face_of = np.concatenate([surface.face_of, np.full(n_new, BOUNDARY, dtype=np.int64)])
    k = n_old
    for e in cut:
        h = int(surface.edge_he[e])
        t = int(surface.twin[h])
        for g, other in ((h, t), (t, h)):
            twin[g] = k
            twin[k] = g
            origin[k] = surface.origin[other]  # boundary twin runs head -> tail
            k += 1

    # Re-link next for every boundary halfedge: next[b] is the boundary
    # halfedge leaving head(b), found by rotating clockwise around head(b)
    # starting at twin[b] (whose face is interior) via h <- twin[prev[h]].
    prev = np.empty(len(next_he), dtype=np.int64)
    interior = face_of >= 0
    prev[next_he[interior]] = np.flatnonzero(interior)
    for b in np.flatnonzero(face_of < 0):
        g = int(twin[b])
        guard = 0
        while face_of[g] >= 0:
            g = int(twin[prev[g]])
            guard += 1
            if guard > len(twin):
                raise NonManifold("boundary re-linking failed")
        next_he[b] = g

    # split vertices: one vertex per rotational orbit of next[twin[.]]
    vertex_of = np.full(len(next_he), -1, dtype=np.int64)
    vertex_map = []
    for h0 in range(len(next_he)):
        if vertex_of[h0] >= 0:
            continue
        v_new = len(vertex_map)
        vertex_map.append(int(origin[h0]))
        h = h0
        while vertex_of[h] < 0:
            vertex_of[h] = v_new
            h = int(next_he[twin[h]])
    out = HalfedgeSurface(next_he, twin, vertex_of, face_of)
    out.assert_valid()
    return out, np.asarray(vertex_map, dtype=np.int64)
