"""Common refinement of the frozen triangulation T and the deforming T'.

The refinement is a polygonal halfedge mesh whose vertices are the original
vertices plus the crossings of T-edges with T'-edges.  Crossing positions
are stored as scalar parameters on their host edges, one per metric: the
position on the T-host edge is frozen (it lives in the initial metric d),
the position on the T'-host edge is a pair of frozen weights from which the
current parameter follows for any conformal factor (the projective map
restricted to an edge is a 1D vertex scaling).

Every face knows its host pair (face of T, face of T') and the side lengths
and chart coordinates of its mapping triangle: the virtual triangle,
inscribed in the circumcircle of the host T-face chart, from which the
circumcircle-preserving projective map onto the current host T'-triangle
restricts to the discrete conformal map on this face.

Cocircular switches update the refinement locally: the old diagonal's
sub-edges lose their T'-parent (disappearing entirely when they carry no
T-parent), the new diagonal is traced as a straight segment across the quad
in the metric current at the switch instant, and every face of the quad
receives its new host and a new mapping triangle by pulling the new host's
corners back through the face's current projective map.
"""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .errors import DegenerateIntersection, PointNotLocated
from .halfedge import HalfedgeSurface
from .metric import SwitchEvent

SNAP = 1e-9          # relative snapping distance for trace/vertex incidences
ORIG, CROSS = 0, 1


class RefinementSurface:
    """Polygonal common refinement with cross-pointers to T and T'."""

    def __init__(self, surface_T: HalfedgeSurface, lengths_T: np.ndarray,
                 surface_Tp: HalfedgeSurface):
        self.T = surface_T
        self.lengths_T = np.asarray(lengths_T, dtype=np.float64)
        self.Tp = surface_Tp

        n_v = surface_T.n_vertices
        # vertex columns
        self.v_kind = [ORIG] * n_v
        self.v_orig = list(range(n_v))
        self.v_t_host = [-1] * n_v    # T-halfedge carrying the crossing
        self.v_s_d = [0.0] * n_v      # frozen parameter along v_t_host (metric d)
        self.v_tp_host = [-1] * n_v   # T'-halfedge carrying the crossing
        self.v_a = [(0.5, 0.5)] * n_v  # frozen weights on the T'-host
        self.v_lam = [0.0] * n_v      # cached current parameter on v_tp_host
        self.v_alive = [True] * n_v

        # halfedge columns
        self.r_next: list[int] = []
        self.r_twin: list[int] = []
        self.r_origin: list[int] = []
        self.r_face: list[int] = []
        self.r_parent_T: list[int] = []
        self.r_parent_Tp: list[int] = []
        self.r_src: list[np.ndarray] = []   # origin coords in host-T chart
        self.r_tp_slot: list[int] = []      # host-T' face halfedge carrying origin
        self.r_alive: list[bool] = []

        # face columns
        self.f_he: list[int] = []
        self.f_host_T: list[int] = []
        self.f_host_Tp: list[int] = []
        self.f_map: list[np.ndarray] = []   # 3x2 mapping-triangle chart coords
        self.f_alive: list[bool] = []

        self.first_sub_T: dict[int, int] = {}
        self.first_sub_Tp: dict[int, int] = {}
        self.faces_by_T: dict[int, set] = {}
        self.faces_by_Tp: dict[int, set] = {}
        self._charts: dict[int, tuple] = {}
        self.snap_log: list = []
        self.switch_count = 0

        # build the initial refinement: one face per T-face
        rh_of = {}
        for h in range(surface_T.n_halfedges):
            if surface_T.face_of[h] < 0:
                continue
            rh_of[h] = len(self.r_next)
            self.r_next.append(-1)
            self.r_twin.append(-1)
            self.r_origin.append(int(surface_T.origin[h]))
            self.r_face.append(int(surface_T.face_of[h]))
            self.r_parent_T.append(h)
            self.r_parent_Tp.append(h)
            self.r_src.append(np.zeros(2))
            self.r_tp_slot.append(h)
            self.r_alive.append(True)
        for h, rh in rh_of.items():
            self.r_next[rh] = rh_of[int(surface_T.next_he[h])]
            t = int(surface_T.twin[h])
            self.r_twin[rh] = rh_of.get(t, -1)
            self.first_sub_T[h] = rh
            self.first_sub_Tp[h] = rh
        for f in range(surface_T.n_faces):
            pts, _ = self.chart(f)
            cyc = surface_T.face_halfedges(f)
            for i, h in enumerate(cyc):
                self.r_src[rh_of[h]] = pts[i].copy()
            self.f_he.append(rh_of[cyc[0]])
            self.f_host_T.append(f)
            self.f_host_Tp.append(f)
            self.f_map.append(pts.copy())
            self.f_alive.append(True)
            self.faces_by_T.setdefault(f, set()).add(f)
            self.faces_by_Tp.setdefault(f, set()).add(f)

    # ------------------------------------------------------------------
    # basic helpers

    def chart(self, f_T: int):
        """Canonical planar layout of a T-face in the initial metric, plus
        its circumcircle."""
        if f_T not in self._charts:
            h0, h1, h2 = self.T.face_halfedges(f_T)
            L = self.lengths_T
            pts = geo.layout_triangle(L[self.T.edge_of[h0]],
                                      L[self.T.edge_of[h1]],
                                      L[self.T.edge_of[h2]])
            self._charts[f_T] = (pts, geo.circumcircle(pts))
        return self._charts[f_T]

    def n_faces_alive(self) -> int:
        return sum(self.f_alive)

    def face_cycle(self, F: int):
        out = []
        h = self.f_he[F]
        while True:
            out.append(h)
            h = self.r_next[h]
            if h == self.f_he[F]:
                return out
            if len(out) > len(self.r_next):
                raise RuntimeError(f"refinement face {F} does not close")

    def face_vertices(self, F: int):
        return [self.r_origin[h] for h in self.face_cycle(F)]

    def outgoing(self, rh: int):
        """Rotational orbit of outgoing halfedges starting at rh (interior
        vertices only)."""
        out = [rh]
        h = rh
        while True:
            t = self.r_twin[h]
            if t < 0:
                raise PointNotLocated("circulation hit the refinement boundary")
            h = self.r_next[t]
            if h == rh:
                return out
            out.append(h)
            if len(out) > len(self.r_next):
                raise RuntimeError("vertex circulation does not close")

    def _next_sub(self, rh: int, parent: int, which: str):
        """Chain step: the sub-halfedge continuing `parent` after rh, or -1
        when rh ends at an original vertex."""
        head = self.r_origin[self.r_next[rh]] if self.r_next[rh] >= 0 else -1
        if head < 0 or self.v_kind[head] == ORIG:
            return -1
        col = self.r_parent_T if which == "T" else self.r_parent_Tp
        start = self.r_next[rh]
        for out in self.outgoing(start):
            if col[out] == parent and out != self.r_twin[rh]:
                return out
        return -1

    def chain(self, parent_he: int, which: str = "T"):
        """All sub-halfedges along a parent halfedge, in order from its
        origin."""
        first = (self.first_sub_T if which == "T" else self.first_sub_Tp).get(parent_he, -1)
        out = []
        rh = first
        while rh >= 0:
            out.append(rh)
            rh = self._next_sub(rh, parent_he, which)
            if len(out) > len(self.r_next):
                raise RuntimeError("parent chain does not terminate")
        return out

    def update_positions(self, x: np.ndarray):
        """Recompute the cached T'-side parameter of every crossing vertex
        for the conformal factor with x = e^{-2w}."""
        Tp = self.Tp
        for v in range(len(self.v_kind)):
            if not self.v_alive[v] or self.v_kind[v] != CROSS:
                continue
            h = self.v_tp_host[v]
            o = Tp.origin[h]
            d = Tp.origin[Tp.twin[h]]
            a_o, a_h = self.v_a[v]
            num = a_h * x[d]
            self.v_lam[v] = num / (a_o * x[o] + num)

    def _tp_param(self, rh: int):
        """(slot, parameter along slot) of origin(rh) on its host T' face."""
        slot = self.r_tp_slot[rh]
        v = self.r_origin[rh]
        if self.v_kind[v] == ORIG:
            return slot, 0.0
        host = self.v_tp_host[v]
        if host == slot:
            return slot, self.v_lam[v]
        if self.Tp.twin[host] == slot:
            return slot, 1.0 - self.v_lam[v]
        raise RuntimeError(f"slot/host mismatch at refinement halfedge {rh}")

    def tp_layout(self, f_Tp: int, scaled_lengths: np.ndarray):
        """Canonical layout of a T'-face in the current scaled metric, with
        its halfedge cycle."""
        cyc = self.Tp.face_halfedges(f_Tp)
        L = scaled_lengths
        pts = geo.layout_triangle(L[self.Tp.edge_of[cyc[0]]],
                                  L[self.Tp.edge_of[cyc[1]]],
                                  L[self.Tp.edge_of[cyc[2]]])
        return cyc, pts

    def tp_position(self, rh: int, cyc, pts):
        slot, t = self._tp_param(rh)
        i = cyc.index(slot)
        return pts[i] + t * (pts[(i + 1) % 3] - pts[i])

    # ------------------------------------------------------------------
    # switch replay

    def apply_switch(self, ev: SwitchEvent, scaled_lengths: np.ndarray,
                     x: np.ndarray):
        """Update the refinement for one cocircular diagonal switch (the
        surface T' has already been flipped)."""
        q = ev.quad
        self.update_positions(x)
        rf = set(self.faces_by_Tp.get(q.face, set())) | set(self.faces_by_Tp.get(q.face_p, set()))
        for F in rf:
            self.faces_by_Tp[self.f_host_Tp[F]].discard(F)

        # quad chart at the switch instant
        u0 = np.array([0.0, 0.0])
        v0 = np.array([ev.l_e, 0.0])
        cu = np.clip((ev.l_e ** 2 + ev.l2 ** 2 - ev.l1 ** 2) / (2 * ev.l_e * ev.l2), -1.0, 1.0)
        up = ev.l2 * np.array([cu, np.sqrt(max(1 - cu * cu, 0.0))])
        cv = np.clip((ev.l_e ** 2 + ev.l1p ** 2 - ev.l2p ** 2) / (2 * ev.l_e * ev.l1p), -1.0, 1.0)
        vp = ev.l1p * np.array([cv, -np.sqrt(max(1 - cv * cv, 0.0))])
        old_seg = {q.h: (u0, v0), q.h_next: (v0, up), q.h_prev: (up, u0),
                   q.t: (v0, u0), q.t_next: (u0, vp), q.t_prev: (vp, v0)}
        scale = max(ev.l_e, ev.l1, ev.l2, ev.l1p, ev.l2p)
        snap = SNAP * scale

        # current coords of every corner of every quad face
        vcoord = {}
        for F in rf:
            for rh in self.face_cycle(F):
                slot, t = self._tp_param(rh)
                A, B = old_seg[slot]
                vcoord[rh] = A + t * (B - A)

        # per-face snapshot of the current projective map (chart -> quad)
        old_cycle = {}
        for fid, he0, tri in ((q.face, ev.fa_he0, (q.h, q.h_next, q.h_prev)),
                              (q.face_p, ev.fb_he0, (q.t, q.t_next, q.t_prev))):
            i = tri.index(he0)
            old_cycle[fid] = tri[i:] + tri[:i]
        snapshots = {}
        for F in rf:
            cyc = old_cycle[self.f_host_Tp[F]]
            dst = np.array([old_seg[s][0] for s in cyc])
            M = geo.cppm_matrix(self.f_map[F], dst)
            snapshots[F] = (M, np.linalg.inv(M))
        snap_of = {F: F for F in rf}

        # --- step A: retire the old diagonal as a T'-parent -------------
        old_chain = self.chain(q.h, "Tp")
        self.first_sub_Tp.pop(q.h, None)
        self.first_sub_Tp.pop(q.t, None)
        removable = []
        for rh in old_chain:
            rt = self.r_twin[rh]
            self.r_parent_Tp[rh] = -1
            if rt >= 0:
                self.r_parent_Tp[rt] = -1
            if self.r_parent_T[rh] < 0:
                removable.append(rh)
        dissolve_candidates = set()
        for rh in removable:
            rt = self.r_twin[rh]
            for v in (self.r_origin[rh], self.r_origin[rt]):
                if self.v_kind[v] == CROSS and self.v_tp_host[v] in (q.h, q.t):
                    dissolve_candidates.add(v)
            F1, F2 = self.r_face[rh], self.r_face[rt]
            if F1 == F2:
                raise DegenerateIntersection(
                    f"old diagonal sub-edge {rh} has the same face on both sides")
            cyc2 = self.face_cycle(F2)
            pa = self._prev_in_face(rh)
            pb = self._prev_in_face(rt)
            self.r_next[pa] = self.r_next[rt]
            self.r_next[pb] = self.r_next[rh]
            for g in cyc2:
                if g != rt:
                    self.r_face[g] = F1
            self.f_he[F1] = pa
            self.r_alive[rh] = self.r_alive[rt] = False
            self.f_alive[F2] = False
            self.faces_by_T[self.f_host_T[F2]].discard(F2)
            rf.discard(F2)
            snap_of.pop(F2, None)
            vcoord.pop(rh, None)
            vcoord.pop(rt, None)
        for v in dissolve_candidates:
            self._dissolve(v)

        # --- step B: trace the new diagonal -----------------------------
        chords = []
        for F in rf:
            for rh in self.face_cycle(F):
                if self.r_parent_Tp[rh] < 0 and rh < self.r_twin[rh]:
                    chords.append(rh)
        # post-flip halfedge directions of the new diagonal:
        #   q.t runs up -> vp (ascending trace parameter), q.h runs vp -> up
        d_fwd, d_bwd = q.t, q.h
        trace_pts = {F: [] for F in rf}  # face -> [(tau, boundary rh at the point)]
        pass_verts = []                  # (tau, vertex) pass-throughs
        for rh in chords:
            rt = self.r_twin[rh]
            p0, p1 = vcoord[rh], vcoord[self.r_next[rh]]
            hit = geo.segment_intersection(up, vp, p0, p1)
            if hit is None:
                continue
            tau, sg = hit
            if not (SNAP < tau < 1 - SNAP):
                continue
            if sg < -SNAP or sg > 1 + SNAP:
                continue
            if sg < SNAP or sg > 1 - SNAP:
                # trace passes through an existing vertex; no split needed
                v_hit = self.r_origin[rh] if sg < SNAP else self.r_origin[self.r_next[rh]]
                pass_verts.append((tau, v_hit))
                self.snap_log.append(("vertex-pass", self.switch_count, rh, sg))
                continue
            p_quad = up + tau * (vp - up)
            v_new = self._make_crossing(rh, rt, sg, tau, p_quad, d_fwd,
                                        snapshots, snap_of, ev, x)
            b1, b2 = self._split_edge(rh, rt, v_new)
            vcoord[b1] = p_quad.copy()
            vcoord[b2] = p_quad.copy()
            trace_pts[self.r_face[rh]].append((tau, b1))
            trace_pts[self.r_face[rt]].append((tau, b2))

        # --- step C: split faces along the trace ------------------------
        # corner incidences: the trace endpoints are the quad corners up, vp
        cscale = max(float(np.linalg.norm(vp - up)), 1e-300)
        for F in rf:
            for rh in self.face_cycle(F):
                p = vcoord[rh]
                if np.linalg.norm(p - up) <= SNAP * cscale:
                    trace_pts[F].append((0.0, rh))
                elif np.linalg.norm(p - vp) <= SNAP * cscale:
                    trace_pts[F].append((1.0, rh))
        for tau, v_hit in pass_verts:
            for F in rf:
                for rh in self.face_cycle(F):
                    if self.r_origin[rh] == v_hit:
                        trace_pts[F].append((tau, rh))

        diag_subs = {}  # rh aligned with d_fwd -> origin tau
        for F in sorted(rf):
            on_trace = sorted(trace_pts.get(F, ()), key=lambda it: it[0])
            if len(on_trace) < 2:
                continue
            poly = [vcoord[rh] for rh in self.face_cycle(F)]
            for (ta, ha), (tb, hb) in zip(on_trace[:-1], on_trace[1:]):
                if tb - ta <= SNAP:
                    continue
                if self.r_next[ha] == hb or self.r_next[hb] == ha:
                    # the interval runs along an existing sub-edge
                    fwd_he, rev_he = (ha, hb) if self.r_next[ha] == hb else (hb, ha)
                    if self.r_parent_Tp[fwd_he] < 0:
                        self.r_parent_Tp[fwd_he] = d_fwd
                        if self.r_twin[fwd_he] >= 0:
                            self.r_parent_Tp[self.r_twin[fwd_he]] = d_bwd
                        diag_subs[fwd_he] = ta
                        self.snap_log.append(
                            ("collinear-adopt", self.switch_count, fwd_he))
                    else:
                        self.snap_log.append(
                            ("collinear-skip", self.switch_count, fwd_he))
                    continue
                mid = up + 0.5 * (ta + tb) * (vp - up)
                if not geo.point_in_polygon(poly, mid):
                    continue
                Fa = self.r_face[ha]
                if Fa != self.r_face[hb]:
                    raise DegenerateIntersection("trace pairing failed")
                d1 = self._split_face(Fa, ha, hb, d_fwd, d_bwd)
                vcoord[d1] = vcoord[ha]
                vcoord[self.r_twin[d1]] = vcoord[hb]
                diag_subs[d1] = ta
                new_F = self.r_face[self.r_twin[d1]]
                rf.add(new_F)
                snap_of[new_F] = snap_of[Fa]

        # --- step D: re-host, new slots, new mapping triangles ----------
        fg = int(self.Tp.face_of[q.t_next])   # post-flip face containing corner u
        fgp = int(self.Tp.face_of[q.h_next])  # post-flip face containing corner v
        new_seg = {q.h: (vp, up), q.h_prev: (up, u0), q.t_next: (u0, vp),
                   q.t: (up, vp), q.t_prev: (vp, v0), q.h_next: (v0, up)}
        D = vp - up
        sign_u = np.sign(geo.cross2(D, u0 - up))
        for F in sorted(rf):
            cyc = self.face_cycle(F)
            best = 0.0
            for rh in cyc:
                s = geo.cross2(D, vcoord[rh] - up)
                if abs(s) > abs(best):
                    best = s
            host = fg if np.sign(best) == sign_u else fgp
            self.f_host_Tp[F] = host
            self.faces_by_Tp.setdefault(host, set()).add(F)
            hcyc = self.Tp.face_halfedges(host)
            corners = np.array([new_seg[s][0] for s in hcyc])
            M_inv = snapshots[snap_of[F]][1]
            self.f_map[F] = np.array([geo.apply_homogeneous(M_inv, c) for c in corners])
            for rh in cyc:
                self.r_tp_slot[rh] = self._find_slot(vcoord[rh], hcyc, new_seg, snap)

        # --- step E: first-sub pointers of the new diagonal --------------
        fwd = [(tau, rh) for rh, tau in diag_subs.items()]
        if not fwd:
            raise DegenerateIntersection("switch produced no diagonal sub-edges")
        fwd.sort()
        self.first_sub_Tp[d_fwd] = fwd[0][1]
        self.first_sub_Tp[d_bwd] = self.r_twin[fwd[-1][1]]
        self.switch_count += 1

    # -- switch internals ----------------------------------------------

    def _prev_in_face(self, rh: int) -> int:
        g = rh
        while self.r_next[g] != rh:
            g = self.r_next[g]
        return g

    def _dissolve(self, v: int):
        """Remove a degree-2 crossing vertex, merging its two collinear
        sub-edges."""
        if not self.v_alive[v]:
            return
        outs = []
        for rh in range(len(self.r_next)):
            if self.r_alive[rh] and self.r_origin[rh] == v:
                outs.append(rh)
        if len(outs) != 2:
            return  # still used by other parents
        o1, o2 = outs
        A = self.r_twin[o1]
        B = self.r_twin[o2]
        if A < 0 or B < 0:
            return
        if self.r_next[A] != o2 or self.r_next[B] != o1:
            raise RuntimeError(f"dissolve: vertex {v} is not flat")
        self.r_next[A] = self.r_next[o2]
        self.r_next[B] = self.r_next[o1]
        self.r_twin[A] = B
        self.r_twin[B] = A
        if self.f_he[self.r_face[o1]] == o1:
            self.f_he[self.r_face[o1]] = B
        if self.f_he[self.r_face[o2]] == o2:
            self.f_he[self.r_face[o2]] = A
        self.r_alive[o1] = self.r_alive[o2] = False
        self.v_alive[v] = False

    def _make_crossing(self, rh, rt, sg, tau, p_quad, d_fwd, snapshots,
                       snap_of, ev: SwitchEvent, x):
        """New crossing vertex where the traced diagonal meets the chord
        rh at chord parameter sg and trace parameter tau."""
        q = ev.quad
        F1 = self.r_face[rh]
        M_inv = snapshots[snap_of[F1]][1]
        src1 = geo.apply_homogeneous(M_inv, p_quad)
        hT = self.r_parent_T[rh]
        fT = self.f_host_T[F1]
        pts, _ = self.chart(fT)
        cycT = self.T.face_halfedges(fT)
        i = cycT.index(hT)
        s_d, _ = geo.point_segment(src1, pts[i], pts[(i + 1) % 3])
        # frozen weights on the new diagonal d_fwd (origin up-corner)
        o = int(self.Tp.origin[d_fwd])
        d = int(self.Tp.origin[self.Tp.twin[d_fwd]])
        a_o = (1.0 - tau) / x[o]
        a_h = tau / x[d]
        tot = a_o + a_h
        v = len(self.v_kind)
        self.v_kind.append(CROSS)
        self.v_orig.append(-1)
        self.v_t_host.append(hT)
        self.v_s_d.append(float(s_d))
        self.v_tp_host.append(d_fwd)
        self.v_a.append((a_o / tot, a_h / tot))
        self.v_lam.append(float(tau))
        self.v_alive.append(True)
        return v

    def _split_edge(self, rh, rt, v):
        """Split the edge (rh, rt) at vertex v; returns the two new
        halfedges (b1 continues rh, b2 continues rt)."""
        F1, F2 = self.r_face[rh], self.r_face[rt]
        b1 = self._new_he(v, F1, self.r_parent_T[rh], self.r_parent_Tp[rh])
        b2 = self._new_he(v, F2, self.r_parent_T[rt], self.r_parent_Tp[rt])
        self.r_next[b1] = self.r_next[rh]
        self.r_next[rh] = b1
        self.r_next[b2] = self.r_next[rt]
        self.r_next[rt] = b2
        self.r_twin[b1] = rt
        self.r_twin[rt] = b1
        self.r_twin[b2] = rh
        self.r_twin[rh] = b2
        # src coords of v in each side's host-T chart, via the frozen s_d
        self.r_src[b1] = self._src_on_parent(b1)
        self.r_src[b2] = self._src_on_parent(b2)
        return b1, b2

    def _src_on_parent(self, rh) -> np.ndarray:
        """Chart coordinates of origin(rh) from its crossing data, valid in
        the host-T chart of r_face[rh]."""
        v = self.r_origin[rh]
        hT = self.r_parent_T[rh]
        fT = self.f_host_T[self.r_face[rh]]
        pts, _ = self.chart(fT)
        cycT = self.T.face_halfedges(fT)
        host = self.v_t_host[v]
        if host in cycT:
            i = cycT.index(host)
            t = self.v_s_d[v]
        else:
            i = cycT.index(self.T.twin[host])
            t = 1.0 - self.v_s_d[v]
        return pts[i] + t * (pts[(i + 1) % 3] - pts[i])

    def _new_he(self, origin, face, parent_T, parent_Tp) -> int:
        rh = len(self.r_next)
        self.r_next.append(-1)
        self.r_twin.append(-1)
        self.r_origin.append(origin)
        self.r_face.append(face)
        self.r_parent_T.append(parent_T)
        self.r_parent_Tp.append(parent_Tp)
        self.r_src.append(np.zeros(2))
        self.r_tp_slot.append(-1)
        self.r_alive.append(True)
        return rh

    def _split_face(self, F, ha, hb, d_fwd, d_bwd) -> int:
        """Insert the chord origin(ha) -> origin(hb) into face F; the new
        face takes the cycle through ha.  Returns the chord halfedge d1
        (aligned with d_fwd)."""
        pa = self._prev_in_face(ha)
        pb = self._prev_in_face(hb)
        d1 = self._new_he(self.r_origin[ha], F, -1, d_fwd)
        F2 = len(self.f_he)
        d2 = self._new_he(self.r_origin[hb], F2, -1, d_bwd)
        self.r_twin[d1] = d2
        self.r_twin[d2] = d1
        self.r_next[d1] = hb
        self.r_next[pa] = d1
        self.r_next[d2] = ha
        self.r_next[pb] = d2
        self.f_he[F] = d1
        self.f_he.append(d2)
        self.f_host_T.append(self.f_host_T[F])
        self.f_host_Tp.append(-1)
        self.f_map.append(self.f_map[F].copy())
        self.f_alive.append(True)
        g = d2
        while True:
            self.r_face[g] = F2
            g = self.r_next[g]
            if g == d2:
                break
        self.faces_by_T[self.f_host_T[F]].add(F2)
        self.r_src[d1] = self.r_src[ha].copy()
        self.r_src[d2] = self.r_src[hb].copy()
        return d1

    def _find_slot(self, p, hcyc, seg, snap):
        best = None
        for i, s in enumerate(hcyc):
            A, B = seg[s]
            t, dist = geo.point_segment(p, A, B)
            if -SNAP <= t <= 1 + SNAP and (best is None or dist < best[0]):
                best = (dist, i, t)
        if best is None or best[0] > 1e4 * snap:
            raise DegenerateIntersection("refinement vertex not on its host boundary")
        _, i, t = best
        if t >= 1.0 - SNAP:
            i = (i + 1) % 3
        return hcyc[i]

    # ------------------------------------------------------------------
    # map evaluation and distortion

    def locate(self, f_T: int, bary):
        """Refinement face containing a point of a T-face, by its frozen
        chart geometry."""
        pts, _ = self.chart(f_T)
        p = geo.from_barycentric(pts, bary)
        faces = sorted(self.faces_by_T.get(f_T, ()))
        for F in faces:
            poly = [self.r_src[rh] for rh in self.face_cycle(F)]
            if geo.point_in_polygon(poly, p):
                return F, p
        # boundary-tolerant second pass
        best, bdist = None, np.inf
        for F in faces:
            cyc = self.face_cycle(F)
            poly = [self.r_src[rh] for rh in cyc]
            d = min(geo.point_segment(p, poly[i], poly[(i + 1) % len(poly)])[1]
                    for i in range(len(poly)))
            if d < bdist:
                best, bdist = F, d
        scale = np.abs(pts).max()
        if best is None or bdist > 1e-9 * scale:
            raise PointNotLocated(f"point {p} not in any refinement face of T-face {f_T}")
        return best, p

    def map_point(self, f_T: int, bary, scaled_lengths: np.ndarray):
        """Discrete conformal image of a point: (face of T', barycentric in
        the cycle order of that face).  Original vertices map to themselves
        exactly."""
        bary = np.asarray(bary, dtype=np.float64)
        if bary.min() < -1e-12 or abs(bary.sum() - 1.0) > 1e-9:
            raise PointNotLocated("invalid barycentric input")
        hit = np.flatnonzero(bary == 1.0)
        if hit.size:
            return self._map_vertex(f_T, int(hit[0]))
        F, p = self.locate(f_T, bary)
        b_src = geo.barycentric(self.f_map[F], p)
        host = self.f_host_Tp[F]
        hcyc, hpts = self.tp_layout(host, scaled_lengths)
        mu = geo.cppm_factors(self.f_map[F], hpts)
        out = mu * b_src
        return host, out / out.sum()

    def _map_vertex(self, f_T: int, corner: int):
        cycT = self.T.face_halfedges(f_T)
        v = int(self.T.origin[cycT[corner]])
        for F in sorted(self.faces_by_T.get(f_T, ())):
            for rh in self.face_cycle(F):
                if self.r_origin[rh] == v and self.v_kind[v] == ORIG:
                    host = self.f_host_Tp[F]
                    hcyc = self.Tp.face_halfedges(host)
                    slot = self.r_tp_slot[rh]
                    out = np.zeros(3)
                    out[hcyc.index(slot)] = 1.0
                    return host, out
        raise PointNotLocated(f"vertex corner {corner} of T-face {f_T} not found")

    def face_distortion(self, F: int, scaled_lengths: np.ndarray) -> float:
        """Conformal distortion (|a|+|b|)/(|a|-|b|) of the linear map from
        the mapping triangle to the current host T'-triangle."""
        src = self.f_map[F]
        _, dst = self.tp_layout(self.f_host_Tp[F], scaled_lengths)
        z = src[:, 0] + 1j * src[:, 1]
        w = dst[:, 0] + 1j * dst[:, 1]
        M = np.array([[z[1] - z[0], np.conj(z[1] - z[0])],
                      [z[2] - z[0], np.conj(z[2] - z[0])]])
        rhs = np.array([w[1] - w[0], w[2] - w[0]])
        alpha, beta = np.linalg.solve(M, rhs)
        denom = abs(alpha) - abs(beta)
        if denom <= 0:
            return np.inf
        return max(float((abs(alpha) + abs(beta)) / denom), 1.0)

    def face_area_T(self, F: int) -> float:
        """Area of the face as a subset of its host T-triangle (metric d)."""
        return abs(geo.polygon_area([self.r_src[rh] for rh in self.face_cycle(F)]))

    def face_area_Tp(self, F: int, scaled_lengths: np.ndarray) -> float:
        cyc, pts = self.tp_layout(self.f_host_Tp[F], scaled_lengths)
        return abs(geo.polygon_area([self.tp_position(rh, cyc, pts)
                                     for rh in self.face_cycle(F)]))

    # ------------------------------------------------------------------
    # audits

    def areas_audit(self, scaled_lengths: np.ndarray):
        """Max relative error of sub-polygon areas against host-triangle
        areas, in both metrics."""
        err_T = 0.0
        for fT, faces in self.faces_by_T.items():
            pts, _ = self.chart(fT)
            total = sum(self.face_area_T(F) for F in faces if self.f_alive[F])
            ref = abs(geo.polygon_area(pts))
            err_T = max(err_T, abs(total - ref) / ref)
        err_Tp = 0.0
        for fTp, faces in self.faces_by_Tp.items():
            faces = [F for F in faces if self.f_alive[F]]
            if not faces:
                continue
            _, pts = self.tp_layout(fTp, scaled_lengths)
            total = sum(self.face_area_Tp(F, scaled_lengths) for F in faces)
            ref = abs(geo.polygon_area(pts))
            err_Tp = max(err_Tp, abs(total - ref) / ref)
        return err_T, err_Tp

    def circumcircle_audit(self) -> float:
        """Max relative deviation of mapping-triangle corners from the host
        T-face circumcircle."""
        worst = 0.0
        for F in range(len(self.f_he)):
            if not self.f_alive[F]:
                continue
            _, (c, r) = self.chart(self.f_host_T[F])
            for p in self.f_map[F]:
                worst = max(worst, abs(np.linalg.norm(p - c) - r) / r)
        return worst

    def continuity_audit(self, scaled_lengths: np.ndarray, n_points: int = 100,
                         seed: int = 0) -> float:
        """Worst disagreement of the conformal map evaluated from the two
        faces adjacent to a shared refinement edge, at random points on it.

        Same-host neighbours are compared in the host layout; across a
        T'-edge the two images are compared by their parameters along that
        edge (plus their distances to it)."""
        rng = np.random.default_rng(seed)
        inner = [rh for rh in range(len(self.r_next))
                 if self.r_alive[rh] and 0 <= self.r_twin[rh]
                 and rh < self.r_twin[rh]]
        if not inner:
            return 0.0
        worst = 0.0
        layouts = {}

        def layout(f):
            if f not in layouts:
                layouts[f] = self.tp_layout(f, scaled_lengths)
            return layouts[f]

        for _ in range(n_points):
            rh = inner[int(rng.integers(len(inner)))]
            rt = self.r_twin[rh]
            s = float(rng.uniform(0.1, 0.9))
            pa = (1 - s) * self.r_src[rh] + s * self.r_src[self.r_next[rh]]
            pb = s * self.r_src[rt] + (1 - s) * self.r_src[self.r_next[rt]]
            A, B = self.r_face[rh], self.r_face[rt]
            out = []
            for F, p in ((A, pa), (B, pb)):
                b = geo.barycentric(self.f_map[F], p)
                host = self.f_host_Tp[F]
                cyc, pts = layout(host)
                mu = geo.cppm_factors(self.f_map[F], pts)
                bb = mu * b
                out.append((host, cyc, pts, geo.from_barycentric(pts, bb / bb.sum())))
            (ha, cyca, ptsa, qa), (hb, cycb, ptsb, qb) = out
            if ha == hb:
                worst = max(worst, float(np.linalg.norm(qa - qb)))
                continue
            g = self.r_parent_Tp[rh]
            gt = self.r_parent_Tp[rt]
            if g < 0 or gt < 0:
                worst = np.inf
                continue
            ia = cyca.index(g)
            ta, da = geo.point_segment(qa, ptsa[ia], ptsa[(ia + 1) % 3])
            ib = cycb.index(gt)
            tb, db = geo.point_segment(qb, ptsb[ib], ptsb[(ib + 1) % 3])
            L = np.linalg.norm(ptsa[(ia + 1) % 3] - ptsa[ia])
            worst = max(worst, abs(ta - (1 - tb)) * L, da, db)
        return worst

    def pointer_audit(self):
        """first-sub / parent pointer integrity, both directions."""
        problems = []
        for which, table, surf in (("T", self.first_sub_T, self.T),
                                   ("Tp", self.first_sub_Tp, self.Tp)):
            col = self.r_parent_T if which == "T" else self.r_parent_Tp
            for h, rh in table.items():
                if not self.r_alive[rh]:
                    problems.append(f"{which} first_sub[{h}] dead")
                    continue
                if col[rh] != h:
                    problems.append(f"{which} first_sub[{h}] parent mismatch")
                chain = self.chain(h, which)
                v0 = self.r_origin[chain[0]]
                if self.v_kind[v0] != ORIG or self.v_orig[v0] != int(surf.origin[h]):
                    problems.append(f"{which} chain of {h} starts at wrong vertex")
                for sub in chain:
                    if col[sub] != h:
                        problems.append(f"{which} chain of {h} has parent mismatch")
        return problems

    def integrity_check(self):
        problems = list(self.pointer_audit())
        for rh in range(len(self.r_next)):
            if not self.r_alive[rh]:
                continue
            t = self.r_twin[rh]
            if t >= 0 and (not self.r_alive[t] or self.r_twin[t] != rh):
                problems.append(f"halfedge {rh} twin broken")
            if not self.r_alive[self.r_next[rh]]:
                problems.append(f"halfedge {rh} next dead")
        for F in range(len(self.f_he)):
            if not self.f_alive[F]:
                continue
            try:
                cyc = self.face_cycle(F)
            except RuntimeError as exc:
                problems.append(str(exc))
                continue
            for rh in cyc:
                if self.r_face[rh] != F:
                    problems.append(f"face {F} cycle member {rh} points elsewhere")
        return problems
