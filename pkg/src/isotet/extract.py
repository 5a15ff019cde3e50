"""Marching tetrahedra over the adaptive grid.

Each crossing tet yields one triangle (one corner on one side) or two
(two-vs-two split of the crossing quad).  Crossing vertices are linearly
interpolated on the straddling edges and deduplicated by undirected
Delaunay edge key, so shared tet faces stitch into a watertight surface.
Triangles are oriented with normals pointing from the negative side
(f < alpha) toward the positive side.
"""

from dataclasses import dataclass

import numpy as np

from . import meshio
from .errors import InternalConsistencyError
from .refine import signed_values


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int
    provenance: dict  # undirected grid-edge key -> mesh vertex index

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def edge_use_counts(self):
        counts = {}
        for t in self.triangles:
            for k in range(3):
                a, b = int(t[k]), int(t[(k + 1) % 3])
                key = (a, b) if a < b else (b, a)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def boundary_edge_count(self):
        return sum(1 for c in self.edge_use_counts().values() if c == 1)

    def euler_characteristic(self):
        return self.n_vertices - len(self.edge_use_counts()) + self.n_triangles

    def connected_components(self):
        parent = list(range(self.n_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for t in self.triangles:
            a = find(int(t[0]))
            for k in (1, 2):
                b = find(int(t[k]))
                parent[b] = a
        used = {find(int(v)) for t in self.triangles for v in t}
        return len(used)

    def triangle_normals(self):
        p = self.vertices[self.triangles]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return n

    def vertex_normals(self):
        """Area-weighted average of incident triangle normals."""
        n = np.zeros_like(self.vertices)
        tn = self.triangle_normals()  # area-weighted (unnormalized cross)
        for k in range(3):
            np.add.at(n, self.triangles[:, k], tn)
        norms = np.linalg.norm(n, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return n / norms

    def save(self, path, with_normals=False):
        meshio.save_mesh(
            path,
            self.vertices,
            self.triangles,
            self.vertex_normals() if with_normals else None,
        )

    def area(self):
        return float(np.linalg.norm(self.triangle_normals(), axis=1).sum() / 2.0)


def _crossing_point(pa, pb, fa, fb, alpha):
    t = (alpha - fa) / (fb - fa)
    return (
        pa[0] + t * (pb[0] - pa[0]),
        pa[1] + t * (pb[1] - pa[1]),
        pa[2] + t * (pb[2] - pa[2]),
    )


def _tet_cases(signs):
    """Split local indices into (negative, positive) lists."""
    neg = [i for i in range(4) if signs[i] < 0.0]
    pos = [i for i in range(4) if signs[i] >= 0.0]
    return neg, pos


def _oriented(tri_pts, direction):
    """Order a coordinate triangle so its normal has positive dot with
    direction (from negative toward positive side)."""
    a, b, c = tri_pts
    n = np.cross(np.subtract(b, a), np.subtract(c, a))
    if float(np.dot(n, direction)) < 0.0:
        return (a, c, b)
    return (a, b, c)


def marching_tet(positions, values, alpha):
    """Triangles (as coordinate triples) of the iso-surface inside one
    tetrahedron; 0, 1, or 2 of them."""
    pos = np.asarray(positions, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    s = signed_values(vals, alpha)
    neg, posi = _tet_cases(s)
    if not neg or not posi:
        return []
    direction = pos[posi].mean(axis=0) - pos[neg].mean(axis=0)

    def cp(i, j):
        return _crossing_point(pos[i], pos[j], vals[i], vals[j], alpha)

    if len(neg) == 1 or len(neg) == 3:
        lone, others = (neg[0], posi) if len(neg) == 1 else (posi[0], neg)
        pts = [cp(lone, o) for o in others]
        return [np.asarray(_oriented(tuple(pts), direction))]

    n0, n1 = neg
    p0, p1 = posi
    x = cp(n0, p0)
    y = cp(n0, p1)
    z = cp(n1, p1)
    w = cp(n1, p0)
    # quad cycle x-y-z-w; split along the diagonal from the crossing point
    # on the (lowest negative, lowest positive) edge
    t1 = _oriented((x, y, z), direction)
    t2 = _oriented((x, z, w), direction)
    return [np.asarray(t1), np.asarray(t2)]


def extract_mesh(tri, values, alpha, exclude_corner_tets=True):
    """Marching tetrahedra over the whole grid.

    values: per-vertex field values (every vertex of a crossing tet must
    be valued).  Tets incident to a domain corner are skipped by default:
    their values are far-field and their shapes arbitrary, so the domain
    must enclose the surface with margin.
    """
    values = np.asarray(values, dtype=np.float64)
    tids = np.sort(tri.alive_tet_ids())
    tv_all = tri._tv[tids]

    if np.any(np.isnan(values[tv_all])):
        bad = tids[np.any(np.isnan(values[tv_all]), axis=1)]
        # a crossing tet with a missing value is a pipeline bug; missing
        # values on non-crossing tets cannot happen in the pipeline either
        raise InternalConsistencyError(
            f"{len(bad)} tets have unvalued vertices (first: {bad[:4]})"
        )

    if exclude_corner_tets:
        corner_mask = np.zeros(tri.n_vertices, dtype=bool)
        corner_mask[: len(tri.is_corner)] = np.asarray(tri.is_corner)
        keep = ~np.any(corner_mask[tv_all], axis=1)
        tids = tids[keep]
        tv_all = tv_all[keep]

    s = values[tv_all] - alpha
    eps = 1e-12 * max(1.0, abs(alpha))
    s = np.where(s == 0.0, eps, s)
    crossing = (s.min(axis=1) < 0.0) & (s.max(axis=1) > 0.0)
    tids = tids[crossing]

    pos = tri.positions_array()
    vert_index = {}
    vert_list = []
    tris = []

    def edge_vertex(a, b):
        key = (a, b) if a < b else (b, a)
        idx = vert_index.get(key)
        if idx is None:
            pa, pb = pos[key[0]], pos[key[1]]
            fa, fb = values[key[0]], values[key[1]]
            idx = len(vert_list)
            vert_index[key] = idx
            vert_list.append(_crossing_point(pa, pb, fa, fb, alpha))
        return idx

    for t in tids:
        tv = tri._tv[t]
        sv = values[tv] - alpha
        sv = np.where(sv == 0.0, eps, sv)
        neg = [i for i in range(4) if sv[i] < 0.0]
        posi = [i for i in range(4) if sv[i] >= 0.0]
        direction = pos[tv[posi]].mean(axis=0) - pos[tv[neg]].mean(axis=0)

        if len(neg) == 1 or len(neg) == 3:
            lone, others = (neg[0], posi) if len(neg) == 1 else (posi[0], neg)
            idxs = [edge_vertex(int(tv[lone]), int(tv[o])) for o in others]
            tris.append(_orient_idx(idxs, vert_list, direction))
        else:
            n0, n1 = neg
            p0, p1 = posi
            x = edge_vertex(int(tv[n0]), int(tv[p0]))
            y = edge_vertex(int(tv[n0]), int(tv[p1]))
            z = edge_vertex(int(tv[n1]), int(tv[p1]))
            w = edge_vertex(int(tv[n1]), int(tv[p0]))
            tris.append(_orient_idx([x, y, z], vert_list, direction))
            tris.append(_orient_idx([x, z, w], vert_list, direction))

    # deterministic output order: sort mesh vertices by their edge key
    inv = [None] * len(vert_list)
    for k, i in vert_index.items():
        inv[i] = k
    order = sorted(range(len(vert_list)), key=lambda i: inv[i])
    remap = np.zeros(max(len(vert_list), 1), dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    vertices = np.asarray([vert_list[i] for i in order], dtype=np.float64).reshape(-1, 3)
    triangles = (
        remap[np.asarray(tris, dtype=np.int64)]
        if tris else np.zeros((0, 3), dtype=np.int64)
    )
    provenance = {k: int(remap[i]) for k, i in vert_index.items()}
    return TriangleMesh(vertices, triangles, provenance)


def _orient_idx(idxs, vert_list, direction):
    a, b, c = (np.asarray(vert_list[i]) for i in idxs)
    n = np.cross(b - a, c - a)
    if float(np.dot(n, direction)) < 0.0:
        return (idxs[0], idxs[2], idxs[1])
    return tuple(idxs)
