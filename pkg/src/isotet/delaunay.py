"""Incremental Delaunay tetrahedralization over a box domain.

The eight box corners are permanent vertices, so the tetrahedra tile the
box exactly at all times.  Insertion is Bowyer-Watson: locate by a
remembering stochastic walk, grow the conflict cavity with the perturbed
in-sphere predicate, retriangulate the cavity boundary to the new point.
The last insertion can be undone exactly, which is how vertex relaxation
moves a just-inserted point without a general deletion routine.

Storage is flat arrays plus a free list for recycled tetrahedron slots;
vertex ids are never reused.
"""

import numpy as np

from .errors import DomainError, InternalConsistencyError, PointMerged
from .predicates import in_sphere, in_sphere_perturbed, orient3d, orient3d_det

BOUNDARY = -1

# Face i is opposite vertex i, ordered so that orient3d(face, vertex_i) > 0
# for a positively oriented tetrahedron.
FACES = ((1, 3, 2), (0, 2, 3), (0, 3, 1), (0, 1, 2))

# Triangulation of the box corners (corner id = 4*ix + 2*iy + iz) that is
# Delaunay under the id-keyed symbolic perturbation; the corners are exactly
# cospherical, so the split must match the perturbation or later insertions
# would start from an inconsistent state.  Derived from the exact lower hull
# of the perturbed lift; the combinatorics are box-independent because the
# unperturbed lift is affine on any box's corner set.
_INIT_TETS = (
    (0, 1, 2, 4),
    (1, 2, 3, 4),
    (1, 3, 4, 5),
    (2, 3, 4, 6),
    (3, 4, 5, 6),
    (3, 5, 6, 7),
)


class Triangulation:
    def __init__(self, domain_min, domain_max, eps_merge=None):
        dmin = np.asarray(domain_min, dtype=np.float64)
        dmax = np.asarray(domain_max, dtype=np.float64)
        if dmin.shape != (3,) or dmax.shape != (3,):
            raise DomainError("domain bounds must be 3-vectors")
        if not np.all(np.isfinite(dmin)) or not np.all(np.isfinite(dmax)):
            raise DomainError("domain bounds must be finite")
        if np.any(dmax <= dmin):
            raise DomainError("domain box must have positive volume")
        self.domain_min = dmin
        self.domain_max = dmax
        self.diagonal = float(np.linalg.norm(dmax - dmin))
        self.eps_merge = (
            1e-7 * self.diagonal if eps_merge is None else float(eps_merge)
        )

        # vertex storage
        self._pos = np.zeros((64, 3), dtype=np.float64)
        self._pts = []  # tuple mirror for the predicates
        self.n_vertices = 0
        self.is_corner = []

        # tet storage
        cap = 256
        self._tv = np.full((cap, 4), -2, dtype=np.int64)
        self._tn = np.full((cap, 4), -2, dtype=np.int64)
        self._cc = np.zeros((cap, 3), dtype=np.float64)
        self._alive = np.zeros(cap, dtype=bool)
        self._tgen = np.zeros(cap, dtype=np.int64)  # bumped per slot reuse
        self.n_tet_slots = 0
        self._free = []

        self.vert_tet = []
        self._last_tet = 0
        self._walk_state = 0x9E3779B97F4A7C15
        self._journal = None

        for i in range(8):
            corner = (
                float(dmax[0]) if i & 4 else float(dmin[0]),
                float(dmax[1]) if i & 2 else float(dmin[1]),
                float(dmax[2]) if i & 1 else float(dmin[2]),
            )
            self._push_vertex(corner, corner_flag=True)

        face_map = {}
        for quad in _INIT_TETS:
            a, b, c, d = quad
            if orient3d(self._pts[a], self._pts[b], self._pts[c], self._pts[d]) < 0:
                quad = (a, b, c, d) = (a, b, d, c)
            tid = self._alloc_tet(quad)
            for i in range(4):
                key = tuple(sorted(quad[j] for j in FACES[i]))
                if key in face_map:
                    other, oi = face_map.pop(key)
                    self._tn[tid, i] = other
                    self._tn[other, oi] = tid
                else:
                    face_map[key] = (tid, i)
        for (tid, i) in face_map.values():
            self._tn[tid, i] = BOUNDARY

    # ------------------------------------------------------------------
    # basic accessors

    def position(self, v):
        return self._pts[v]

    def positions_array(self):
        return self._pos[: self.n_vertices]

    def tet_vertices(self, t):
        return tuple(int(x) for x in self._tv[t])

    def tet_neighbors(self, t):
        return tuple(int(x) for x in self._tn[t])

    def alive_tet_ids(self):
        return np.flatnonzero(self._alive[: self.n_tet_slots])

    @property
    def n_tets(self):
        return int(self._alive[: self.n_tet_slots].sum())

    def circumcenter(self, t):
        return self._cc[t]

    def tet_volumes(self, tids=None):
        """Signed volumes (positive by invariant) of the given tets."""
        if tids is None:
            tids = self.alive_tet_ids()
        verts = self._tv[tids]
        p = self._pos[verts]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        w = p[:, 3] - p[:, 0]
        return np.einsum("ij,ij->i", u, np.cross(v, w)) / 6.0

    def total_volume(self):
        return float(self.tet_volumes().sum())

    def domain_volume(self):
        return float(np.prod(self.domain_max - self.domain_min))

    def contains_point(self, p, strict=True):
        p = np.asarray(p, dtype=np.float64)
        if strict:
            return bool(np.all(p > self.domain_min) and np.all(p < self.domain_max))
        return bool(np.all(p >= self.domain_min) and np.all(p <= self.domain_max))

    # ------------------------------------------------------------------
    # vertex / tet slot management

    def _push_vertex(self, p, corner_flag=False):
        if self.n_vertices == self._pos.shape[0]:
            grown = np.zeros((self._pos.shape[0] * 2, 3), dtype=np.float64)
            grown[: self.n_vertices] = self._pos[: self.n_vertices]
            self._pos = grown
        vid = self.n_vertices
        self._pos[vid] = p
        self._pts.append((float(p[0]), float(p[1]), float(p[2])))
        self.is_corner.append(corner_flag)
        self.vert_tet.append(-1)
        self.n_vertices += 1
        return vid

    def _pop_vertex(self):
        self.n_vertices -= 1
        self._pts.pop()
        self.is_corner.pop()
        self.vert_tet.pop()

    def _grow_tets(self):
        cap = self._tv.shape[0] * 2
        for name in ("_tv", "_tn"):
            grown = np.full((cap, 4), -2, dtype=np.int64)
            grown[: self.n_tet_slots] = getattr(self, name)[: self.n_tet_slots]
            setattr(self, name, grown)
        cc = np.zeros((cap, 3), dtype=np.float64)
        cc[: self.n_tet_slots] = self._cc[: self.n_tet_slots]
        self._cc = cc
        alive = np.zeros(cap, dtype=bool)
        alive[: self.n_tet_slots] = self._alive[: self.n_tet_slots]
        self._alive = alive
        gen = np.zeros(cap, dtype=np.int64)
        gen[: self.n_tet_slots] = self._tgen[: self.n_tet_slots]
        self._tgen = gen

    def _alloc_tet(self, verts):
        if self._free:
            tid = self._free.pop()
            fresh = False
        else:
            if self.n_tet_slots == self._tv.shape[0]:
                self._grow_tets()
            tid = self.n_tet_slots
            self.n_tet_slots += 1
            fresh = True
        self._tv[tid] = verts
        self._tn[tid] = -2
        self._alive[tid] = True
        self._tgen[tid] += 1
        self._cc[tid] = self._circumcenter_of(verts)
        for v in verts:
            self.vert_tet[v] = tid
        self._alloc_fresh = fresh
        return tid

    def tet_key(self, t):
        """(slot, generation) pair identifying this tet uniquely across
        slot reuse."""
        return (int(t), int(self._tgen[t]))

    def _circumcenter_of(self, verts):
        a = self._pts[verts[0]]
        b = self._pts[verts[1]]
        c = self._pts[verts[2]]
        d = self._pts[verts[3]]
        ux, uy, uz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
        vx, vy, vz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
        wx, wy, wz = d[0] - a[0], d[1] - a[1], d[2] - a[2]
        vwx, vwy, vwz = vy * wz - vz * wy, vz * wx - vx * wz, vx * wy - vy * wx
        wux, wuy, wuz = wy * uz - wz * uy, wz * ux - wx * uz, wx * uy - wy * ux
        uvx, uvy, uvz = uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx
        det = 2.0 * (ux * vwx + uy * vwy + uz * vwz)
        if det == 0.0:
            return (np.inf, np.inf, np.inf)
        uu = ux * ux + uy * uy + uz * uz
        vv = vx * vx + vy * vy + vz * vz
        ww = wx * wx + wy * wy + wz * wz
        return (
            a[0] + (uu * vwx + vv * wux + ww * uvx) / det,
            a[1] + (uu * vwy + vv * wuy + ww * uvy) / det,
            a[2] + (uu * vwz + vv * wuz + ww * uvz) / det,
        )

    # ------------------------------------------------------------------
    # point location

    def _walk_rand(self):
        self._walk_state = (self._walk_state * 6364136223846793005 + 1442695040888963407) % (1 << 64)
        return self._walk_state >> 33

    def locate(self, p):
        """Tet containing p (weak containment).  p must be strictly inside
        the domain box."""
        pt = (float(p[0]), float(p[1]), float(p[2]))
        if not all(np.isfinite(pt)):
            raise DomainError(f"non-finite point {p!r}")
        if not self.contains_point(pt, strict=True):
            raise DomainError(f"point {pt} is not strictly inside the domain box")
        return self._walk(pt)

    def _walk(self, pt):
        t = self._last_tet
        if not self._alive[t]:
            t = int(self.alive_tet_ids()[0])
        max_steps = 8 * self.n_tet_slots + 64
        steps = 0
        pts = self._pts
        while True:
            steps += 1
            if steps > max_steps:
                raise InternalConsistencyError("point location walk failed to terminate")
            tv = self._tv[t].tolist()
            offset = self._walk_rand() & 3
            moved = False
            for k in range(4):
                i = (k + offset) & 3
                f = FACES[i]
                if (
                    orient3d(pts[tv[f[0]]], pts[tv[f[1]]], pts[tv[f[2]]], pt)
                    < 0
                ):
                    nxt = self._tn[t, i]
                    if nxt == BOUNDARY:
                        raise InternalConsistencyError(
                            "walk exited the hull for an in-domain point"
                        )
                    t = int(nxt)
                    moved = True
                    break
            if not moved:
                self._last_tet = t
                return t

    # ------------------------------------------------------------------
    # insertion

    def insert(self, p):
        """Insert a point strictly inside the domain.  Returns the new
        vertex id; raises PointMerged when p is within eps_merge of an
        existing vertex."""
        pt = (float(p[0]), float(p[1]), float(p[2]))
        if not all(np.isfinite(pt)):
            raise DomainError(f"non-finite point {p!r}")
        if not self.contains_point(pt, strict=True):
            raise DomainError(f"point {pt} is not strictly inside the domain box")

        t0 = self._walk(pt)
        new_vid = self.n_vertices

        # conflict cavity under the perturbed predicate
        pts = self._pts
        cavity = [t0]
        in_cavity = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            for n in self._tn[t].tolist():
                if n == BOUNDARY or n in in_cavity:
                    continue
                va, vb, vc, vd = self._tv[n].tolist()
                if (
                    in_sphere_perturbed(
                        pts[va], pts[vb], pts[vc], pts[vd], pt,
                        va, vb, vc, vd, new_vid,
                    )
                    > 0
                ):
                    in_cavity.add(n)
                    cavity.append(n)
                    stack.append(n)

        # merge guard: the nearest existing vertex is always a vertex of
        # the conflict cavity
        eps2 = self.eps_merge * self.eps_merge
        cavity_verts = set()
        for t in cavity:
            cavity_verts.update(self._tv[t].tolist())
        best_v, best_d2 = -1, np.inf
        for v in cavity_verts:
            q = pts[v]
            d2 = (pt[0] - q[0]) ** 2 + (pt[1] - q[1]) ** 2 + (pt[2] - q[2]) ** 2
            if d2 < best_d2:
                best_v, best_d2 = v, d2
        if best_d2 < eps2:
            raise PointMerged(best_v)

        # boundary faces of the cavity, in deterministic order
        faces = []
        for t in cavity:
            tv = self._tv[t].tolist()
            tn = self._tn[t].tolist()
            for i in range(4):
                n = tn[i]
                if n not in in_cavity or n == BOUNDARY:
                    f = FACES[i]
                    faces.append((tv[f[0]], tv[f[1]], tv[f[2]], n, t))

        for f0, f1, f2, _, _ in faces:
            if orient3d(self._pts[f0], self._pts[f1], self._pts[f2], pt) <= 0:
                raise InternalConsistencyError(
                    "cavity boundary face not positively visible from the new point"
                )

        journal = {
            "vid": new_vid,
            "cavity": [
                (t, self._tv[t].copy(), self._tn[t].copy(), self._cc[t].copy())
                for t in cavity
            ],
            "created": [],
            "outer_fix": [],
            "vert_tet_old": {},
            "last_tet_old": self._last_tet,
        }

        vid = self._push_vertex(pt)

        def note_vert(v):
            if v not in journal["vert_tet_old"]:
                journal["vert_tet_old"][v] = self.vert_tet[v]

        note_vert(vid)

        created = []
        edge_map = {}
        for f0, f1, f2, outer, old_inner in faces:
            for v in (f0, f1, f2):
                note_vert(v)
            tid = self._alloc_tet((f0, f1, f2, vid))
            created.append((tid, self._alloc_fresh))
            journal["created"].append((tid, self._alloc_fresh))
            self._tn[tid, 3] = outer
            if outer != BOUNDARY:
                oi = int(np.where(self._tn[outer] == old_inner)[0][0])
                journal["outer_fix"].append((outer, oi, old_inner))
                self._tn[outer, oi] = tid
            # internal faces (those containing vid) are shared along the
            # boundary-triangle edges: local face 0 <-> edge (f1,f2),
            # 1 <-> (f0,f2), 2 <-> (f0,f1)
            for li, (ea, eb) in ((0, (f1, f2)), (1, (f0, f2)), (2, (f0, f1))):
                key = (ea, eb) if ea < eb else (eb, ea)
                if key in edge_map:
                    otid, oli = edge_map.pop(key)
                    self._tn[tid, li] = otid
                    self._tn[otid, oli] = tid
                else:
                    edge_map[key] = (tid, li)
        if edge_map:
            raise InternalConsistencyError("cavity boundary surface was not closed")

        for t in cavity:
            self._alive[t] = False
            self._free.append(t)

        self._last_tet = created[0][0]
        self._journal = journal
        return vid

    def undo_last_insert(self):
        """Exactly restore the state before the most recent insert."""
        j = self._journal
        if j is None:
            raise InternalConsistencyError("no insertion to undo")
        self._journal = None

        # cavity ids were pushed last
        for _ in range(len(j["cavity"])):
            self._free.pop()
        for tid, fresh in reversed(j["created"]):
            self._alive[tid] = False
            if fresh:
                self.n_tet_slots -= 1
            else:
                self._free.append(tid)
        for t, tv, tn, cc in j["cavity"]:
            self._tv[t] = tv
            self._tn[t] = tn
            self._cc[t] = cc
            self._alive[t] = True
        for outer, oi, old in j["outer_fix"]:
            self._tn[outer, oi] = old
        for v, old in j["vert_tet_old"].items():
            if v < j["vid"]:
                self.vert_tet[v] = old
        self._pop_vertex()
        self._last_tet = j["last_tet_old"]
        if not self._alive[self._last_tet]:
            self._last_tet = j["cavity"][0][0]

    @property
    def last_inserted(self):
        return self._journal["vid"] if self._journal is not None else None

    def last_insert_star(self):
        """Tet ids created by the most recent insert: exactly the star of
        the inserted vertex."""
        if self._journal is None:
            raise InternalConsistencyError("no insertion journal")
        return [tid for tid, _ in self._journal["created"]]

    def last_insert_ring(self):
        """The inserted vertex plus its one-ring, straight from the
        insertion journal (no traversal)."""
        out = set()
        for tid, _ in self._journal["created"]:
            out.update(self._tv[tid].tolist())
        return out

    # ------------------------------------------------------------------
    # adjacency queries

    def incident_tets(self, v):
        """Alive tets containing vertex v, by star traversal."""
        t0 = self.vert_tet[v]
        if t0 < 0 or not self._alive[t0]:
            raise InternalConsistencyError(f"stale incidence pointer for vertex {v}")
        out = [t0]
        seen = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            tv = self._tv[t].tolist()
            li = tv.index(v)
            tn = self._tn[t].tolist()
            for i in range(4):
                if i == li:
                    continue
                n = tn[i]
                if n != BOUNDARY and n not in seen:
                    seen.add(n)
                    out.append(n)
                    stack.append(n)
        return out

    def vertex_neighbors(self, v):
        """Delaunay one-ring of v (vertex ids sharing a tet with v)."""
        out = set()
        for t in self.incident_tets(v):
            out.update(self._tv[t].tolist())
        out.discard(v)
        return out

    def affected_vertices(self, v):
        """v plus its one-ring: the only cells whose geometry an insertion
        at v can change."""
        out = self.vertex_neighbors(v)
        out.add(v)
        return out

    # ------------------------------------------------------------------
    # diagnostics

    def dump_text(self, path):
        """Plain-text dump: vertex lines then tet index quadruples."""
        with open(path, "w") as fh:
            fh.write(f"# vertices {self.n_vertices}\n")
            for v in range(self.n_vertices):
                x, y, z = self._pts[v]
                fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
            tids = self.alive_tet_ids()
            fh.write(f"# tets {len(tids)}\n")
            for t in tids:
                a, b, c, d = self._tv[t]
                fh.write(f"t {a} {b} {c} {d}\n")

    def check_structure(self):
        """Raise on any violated structural invariant (orientation,
        neighbor symmetry, incidence pointers, volume tiling)."""
        tids = self.alive_tet_ids()
        for t in tids:
            tv = self._tv[t]
            if len({int(x) for x in tv}) != 4:
                raise InternalConsistencyError(f"tet {t} has repeated vertices")
            if orient3d(*(self._pts[int(v)] for v in tv)) <= 0:
                raise InternalConsistencyError(f"tet {t} is not positively oriented")
            for i in range(4):
                n = int(self._tn[t, i])
                if n == BOUNDARY:
                    continue
                if not self._alive[n]:
                    raise InternalConsistencyError(f"tet {t} points to dead neighbor {n}")
                back = np.where(self._tn[n] == t)[0]
                if len(back) != 1:
                    raise InternalConsistencyError(
                        f"neighbor relation not symmetric between {t} and {n}"
                    )
                face = {int(self._tv[t][j]) for j in FACES[i]}
                nface = {int(self._tv[n][j]) for j in FACES[int(back[0])]}
                if face != nface:
                    raise InternalConsistencyError(
                        f"shared face mismatch between {t} and {n}"
                    )
        for v in range(self.n_vertices):
            t = self.vert_tet[v]
            if t < 0 or not self._alive[t] or v not in self._tv[t]:
                raise InternalConsistencyError(f"bad incidence pointer for vertex {v}")
        vol = self.total_volume()
        dom = self.domain_volume()
        if abs(vol - dom) > 1e-9 * dom:
            raise InternalConsistencyError(
                f"tet volumes sum to {vol!r}, domain volume is {dom!r}"
            )

    def delaunay_violations(self, chunk=128):
        """Count of (tet, vertex) pairs with the vertex strictly inside
        the tet's circumsphere, decided exactly.  Zero for a valid
        Delaunay tetrahedralization (cospherical ties are not violations).
        """
        from .predicates import _ISP_BOUND

        tids = self.alive_tet_ids()
        pos = self.positions_array()
        n = self.n_vertices
        violations = 0
        for lo in range(0, len(tids), chunk):
            sel = tids[lo: lo + chunk]
            tv = self._tv[sel]  # (m, 4)
            corners = pos[tv]  # (m, 4, 3)
            # differences relative to every query point e: (m, n, 4, 3)
            diff = corners[:, None, :, :] - pos[None, :, None, :]
            ax, ay, az = diff[:, :, 0, 0], diff[:, :, 0, 1], diff[:, :, 0, 2]
            bx, by, bz = diff[:, :, 1, 0], diff[:, :, 1, 1], diff[:, :, 1, 2]
            cx, cy, cz = diff[:, :, 2, 0], diff[:, :, 2, 1], diff[:, :, 2, 2]
            dx, dy, dz = diff[:, :, 3, 0], diff[:, :, 3, 1], diff[:, :, 3, 2]

            ab = ax * by - bx * ay
            bc = bx * cy - cx * by
            cd = cx * dy - dx * cy
            da = dx * ay - ax * dy
            ac = ax * cy - cx * ay
            bd = bx * dy - dx * by
            abc = az * bc - bz * ac + cz * ab
            bcd = bz * cd - cz * bd + dz * bc
            cda = cz * da + dz * ac + az * cd
            dab = dz * ab + az * bd + bz * da
            alift = ax * ax + ay * ay + az * az
            blift = bx * bx + by * by + bz * bz
            clift = cx * cx + cy * cy + cz * cz
            dlift = dx * dx + dy * dy + dz * dz
            det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

            perm = (
                ((np.abs(cx * dy) + np.abs(dx * cy)) * np.abs(bz)
                 + (np.abs(dx * by) + np.abs(bx * dy)) * np.abs(cz)
                 + (np.abs(bx * cy) + np.abs(cx * by)) * np.abs(dz)) * alift
                + ((np.abs(dx * ay) + np.abs(ax * dy)) * np.abs(cz)
                   + (np.abs(ax * cy) + np.abs(cx * ay)) * np.abs(dz)
                   + (np.abs(cx * dy) + np.abs(dx * cy)) * np.abs(az)) * blift
                + ((np.abs(ax * by) + np.abs(bx * ay)) * np.abs(dz)
                   + (np.abs(bx * dy) + np.abs(dx * by)) * np.abs(az)
                   + (np.abs(dx * ay) + np.abs(ax * dy)) * np.abs(bz)) * clift
                + ((np.abs(bx * cy) + np.abs(cx * by)) * np.abs(az)
                   + (np.abs(cx * ay) + np.abs(ax * cy)) * np.abs(bz)
                   + (np.abs(ax * by) + np.abs(bx * ay)) * np.abs(cz)) * dlift
            )
            bound = _ISP_BOUND * perm

            # membership mask: a tet's own vertices are not queries
            member = np.zeros((len(sel), n), dtype=bool)
            rows = np.repeat(np.arange(len(sel)), 4)
            member[rows, tv.reshape(-1)] = True

            inside = (det < -bound) & ~member
            violations += int(inside.sum())
            uncertain = (np.abs(det) <= bound) & ~member
            for mi, e in zip(*np.nonzero(uncertain)):
                tvq = tv[mi]
                s = in_sphere(
                    self._pts[int(tvq[0])],
                    self._pts[int(tvq[1])],
                    self._pts[int(tvq[2])],
                    self._pts[int(tvq[3])],
                    self._pts[int(e)],
                )
                if s > 0:
                    violations += 1
        return violations
