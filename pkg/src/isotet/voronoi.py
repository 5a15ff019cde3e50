"""Voronoi cells dual to the Delaunay tetrahedralization, clipped to the
domain box.

Two computation paths:

* a batched *signed decomposition* that integrates volume, centroid, and
  second moment of interior cells directly from the Delaunay star (six
  signed sub-tets per incident tetrahedron: site, edge midpoint, face
  circumcenter, tet circumcenter).  Valid whenever the cell provably lies
  inside the box, certified by all incident circumcenters being inside.

* an explicit convex polytope, built either from the circumcenter rings
  around each incident Delaunay edge (interior cells) or by clipping the
  box with neighbor bisector half-spaces (corner and boundary cells).
  Used for sampling and whenever the certificate fails.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalConsistencyError

# local indices of the three vertices other than index k, in stored order
_OTHERS = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]], dtype=np.int64)


def _cross_rows(u, v):
    """Row-wise cross product of (n, 3) arrays without np.cross overhead."""
    out = np.empty_like(u)
    out[:, 0] = u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1]
    out[:, 1] = u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2]
    out[:, 2] = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    return out

# (u, w, w2) slot enumeration over the three non-site vertices
_SLOTS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
# unique triangle (v, q_i, q_j) circumcenter index for each slot: key (u, w)
_SLOT_CF = (0, 1, 0, 2, 1, 2)  # 0 -> pair (0,1), 1 -> pair (0,2), 2 -> pair (1,2)
_CF_PAIRS = ((0, 1), (0, 2), (1, 2))


def _triangle_circumcenters(a, b, c):
    """Circumcenters of triangles given as (n,3) arrays of corners."""
    u = b - a
    v = c - a
    d11 = np.einsum("ij,ij->i", u, u)
    d12 = np.einsum("ij,ij->i", u, v)
    d22 = np.einsum("ij,ij->i", v, v)
    det = d11 * d22 - d12 * d12
    det = np.where(det == 0.0, np.nan, det)
    alpha = 0.5 * (d11 * d22 - d22 * d12) / det
    beta = 0.5 * (d22 * d11 - d11 * d12) / det
    return a + alpha[:, None] * u + beta[:, None] * v


def cell_measures(tri, vids, want_centroid=False, want_moment=False, star_map=None):
    """Volumes (and optionally centroids / second moments about the site)
    of the clipped Voronoi cells of ``vids``.

    Interior cells certified to lie inside the box use the batched signed
    decomposition; the rest fall back to explicit clipped polytopes.
    star_map optionally supplies precomputed incident-tet lists.
    """
    vids = list(vids)
    nv = len(vids)
    volumes = np.zeros(nv)
    centroids = np.zeros((nv, 3))
    moments = np.zeros(nv)

    pos = tri.positions_array()
    dmin, dmax = tri.domain_min, tri.domain_max

    pair_cell = []
    pair_site = []
    pair_tet = []
    fallback = []
    for k, v in enumerate(vids):
        if tri.is_corner[v]:
            fallback.append(k)
            continue
        star = (
            star_map[v] if star_map is not None and v in star_map
            else tri.incident_tets(v)
        )
        ccs = tri._cc[star]
        if (
            np.all(np.isfinite(ccs))
            and np.all(ccs >= dmin - 0.0)
            and np.all(ccs <= dmax + 0.0)
        ):
            pair_cell.extend([k] * len(star))
            pair_site.extend([v] * len(star))
            pair_tet.extend(star)
        else:
            fallback.append(k)

    if pair_tet:
        pair_cell = np.asarray(pair_cell, dtype=np.int64)
        pair_site = np.asarray(pair_site, dtype=np.int64)
        pair_tet = np.asarray(pair_tet, dtype=np.int64)
        tv = tri._tv[pair_tet]  # (P, 4)
        loc = np.argmax(tv == pair_site[:, None], axis=1)
        qidx = tv[np.arange(len(tv))[:, None], _OTHERS[loc]]  # (P, 3)
        s = pos[pair_site]  # (P, 3)
        q = pos[qidx]  # (P, 3, 3)
        cc = tri._cc[pair_tet]  # (P, 3)

        cf = [
            _triangle_circumcenters(s, q[:, i], q[:, j]) for i, j in _CF_PAIRS
        ]

        vol = np.zeros(len(tv))
        if want_centroid:
            cen = np.zeros((len(tv), 3))
        if want_moment:
            mom = np.zeros(len(tv))

        ccs_rel = cc - s
        for slot, cfi in zip(_SLOTS, _SLOT_CF):
            iu, iw, iw2 = slot
            u = q[:, iu] - s
            w = q[:, iw] - s
            w2 = q[:, iw2] - s
            sigma = np.sign(np.einsum("ij,ij->i", u, _cross_rows(w, w2)))
            m = 0.5 * u  # midpoint of (site, u) relative to site
            f = cf[cfi] - s
            sub = sigma * np.einsum("ij,ij->i", m, _cross_rows(f, ccs_rel)) / 6.0
            vol += sub
            if want_centroid:
                # sub-tet corners relative to site: 0, m, f, cc
                cen += sub[:, None] * (s + (m + f + ccs_rel) / 4.0)
            if want_moment:
                mm = np.einsum("ij,ij->i", m, m)
                ff = np.einsum("ij,ij->i", f, f)
                tt = np.einsum("ij,ij->i", ccs_rel, ccs_rel)
                mf = np.einsum("ij,ij->i", m, f)
                mt = np.einsum("ij,ij->i", m, ccs_rel)
                ft = np.einsum("ij,ij->i", f, ccs_rel)
                mom += sub * (mm + ff + tt + mf + mt + ft) / 10.0

        np.add.at(volumes, pair_cell, vol)
        if want_centroid:
            np.add.at(centroids, pair_cell, cen)
        if want_moment:
            np.add.at(moments, pair_cell, mom)

    for k in fallback:
        faces = clipped_cell_faces(tri, vids[k])
        vol, cen, mom = _polytope_measures(faces, pos[vids[k]])
        volumes[k] = vol
        centroids[k] = cen
        moments[k] = mom

    if want_centroid:
        with np.errstate(invalid="ignore", divide="ignore"):
            centroids = np.where(
                volumes[:, None] > 0, centroids / np.where(volumes == 0, 1, volumes)[:, None],
                pos[vids],
            )
    out = [volumes]
    if want_centroid:
        out.append(centroids)
    if want_moment:
        out.append(moments)
    return out[0] if len(out) == 1 else tuple(out)


# ---------------------------------------------------------------------------
# explicit polytopes


def _box_faces(dmin, dmax):
    """Six outward-oriented quads of the domain box, as tuple loops."""
    x0, y0, z0 = (float(v) for v in dmin)
    x1, y1, z1 = (float(v) for v in dmax)
    return [
        [(x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)],  # -x
        [(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)],  # +x
        [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],  # -y
        [(x0, y1, z0), (x0, y1, z1), (x1, y1, z1), (x1, y1, z0)],  # +y
        [(x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)],  # -z
        [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],  # +z
    ]


def _clip_faces(faces, n, d, tol):
    """Clip a convex polyhedron (outward-oriented tuple loops) by the
    half-space n.x <= d.  Scalar arithmetic: this is the hot path for
    boundary cells."""
    nx, ny, nz = n
    kept = []
    cap_pts = []
    any_cut = False
    for loop in faces:
        s = [nx * p[0] + ny * p[1] + nz * p[2] - d for p in loop]
        smax = max(s)
        if smax <= tol:
            kept.append(loop)
            for p, si in zip(loop, s):
                if si >= -tol:
                    cap_pts.append(p)
            continue
        if min(s) >= -tol:
            any_cut = True
            continue
        any_cut = True
        out = []
        k = len(loop)
        for i in range(k):
            j = i + 1 if i + 1 < k else 0
            si, sj = s[i], s[j]
            if si <= tol:
                out.append(loop[i])
                if si >= -tol:
                    cap_pts.append(loop[i])
            if (si < -tol and sj > tol) or (si > tol and sj < -tol):
                t = si / (si - sj)
                pi, pj = loop[i], loop[j]
                x = (
                    pi[0] + t * (pj[0] - pi[0]),
                    pi[1] + t * (pj[1] - pi[1]),
                    pi[2] + t * (pj[2] - pi[2]),
                )
                out.append(x)
                cap_pts.append(x)
        if len(out) >= 3:
            kept.append(out)
    if not any_cut:
        return faces
    if not kept:
        return []
    if len(cap_pts) >= 3:
        cap = _assemble_cap(cap_pts, n, tol)
        if cap is not None:
            kept.append(cap)
    return kept


def _assemble_cap(pts, n, tol):
    """Deduplicate intersection points and order them into an
    outward-oriented convex loop with normal ~ +n."""
    t2 = (4 * tol) ** 2
    uniq = []
    for p in pts:
        dup = False
        for q in uniq:
            dx = p[0] - q[0]
            dy = p[1] - q[1]
            dz = p[2] - q[2]
            if dx * dx + dy * dy + dz * dz <= t2:
                dup = True
                break
        if not dup:
            uniq.append(p)
    if len(uniq) < 3:
        return None
    k = len(uniq)
    cx = sum(p[0] for p in uniq) / k
    cy = sum(p[1] for p in uniq) / k
    cz = sum(p[2] for p in uniq) / k
    nx, ny, nz = n
    nl = math.sqrt(nx * nx + ny * ny + nz * nz)
    nx, ny, nz = nx / nl, ny / nl, nz / nl
    if abs(nx) > 0.9:
        rx, ry, rz = 0.0, 1.0, 0.0
    else:
        rx, ry, rz = 1.0, 0.0, 0.0
    e1x = ny * rz - nz * ry
    e1y = nz * rx - nx * rz
    e1z = nx * ry - ny * rx
    el = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
    e1x, e1y, e1z = e1x / el, e1y / el, e1z / el
    e2x = ny * e1z - nz * e1y
    e2y = nz * e1x - nx * e1z
    e2z = nx * e1y - ny * e1x
    angs = []
    for p in uniq:
        dx, dy, dz = p[0] - cx, p[1] - cy, p[2] - cz
        angs.append(math.atan2(
            dx * e2x + dy * e2y + dz * e2z, dx * e1x + dy * e1y + dz * e1z
        ))
    loop = [p for _, p in sorted(zip(angs, uniq), key=lambda t: t[0])]
    # right-hand orientation check: make loop normal point along +n
    sx = sy = sz = 0.0
    for i in range(len(loop)):
        p = loop[i]
        q = loop[i + 1] if i + 1 < len(loop) else loop[0]
        sx += p[1] * q[2] - p[2] * q[1]
        sy += p[2] * q[0] - p[0] * q[2]
        sz += p[0] * q[1] - p[1] * q[0]
    if sx * nx + sy * ny + sz * nz < 0:
        loop.reverse()
    return loop


def clipped_cell_faces(tri, v):
    """Voronoi cell of v as outward-oriented face loops, built by clipping
    the domain box with the bisectors toward all Delaunay neighbors.

    Neighbors are processed nearest-first so the cell shrinks quickly,
    and planes that provably miss the current polytope are skipped with a
    single vectorized test.
    """
    sx, sy, sz = tri.position(v)
    faces = _box_faces(tri.domain_min, tri.domain_max)
    tol = 1e-12 * tri.diagonal
    nbrs = sorted(tri.vertex_neighbors(v))
    pos = tri.positions_array()
    site = np.array((sx, sy, sz))
    rel = pos[nbrs] - site
    order = np.argsort(np.einsum("ij,ij->i", rel, rel), kind="stable")
    verts = {p for loop in faces for p in loop}
    for k in order:
        qx, qy, qz = tri.position(nbrs[k])
        nx, ny, nz = qx - sx, qy - sy, qz - sz
        d = (nx * (sx + qx) + ny * (sy + qy) + nz * (sz + qz)) / 2.0
        scale = tol * max(1.0, math.sqrt(nx * nx + ny * ny + nz * nz))
        if max(nx * p[0] + ny * p[1] + nz * p[2] for p in verts) - d <= scale:
            continue
        faces = _clip_faces(faces, (nx, ny, nz), d, scale)
        if not faces:
            raise InternalConsistencyError(
                f"voronoi cell of vertex {v} clipped to nothing"
            )
        verts = {p for loop in faces for p in loop}
    return [np.asarray(loop) for loop in faces]


def ring_cell_faces(tri, v):
    """Voronoi cell faces of an interior vertex from the circumcenter
    rings around its incident Delaunay edges.  Only valid when the cell
    does not reach the domain boundary (certificate checked by caller)."""
    site = np.asarray(tri.position(v))
    faces = []
    tol = 1e-12 * tri.diagonal
    for u in sorted(tri.vertex_neighbors(v)):
        ring = _edge_ring(tri, v, u)
        loop = tri._cc[ring]
        # drop consecutive duplicates from cospherical configurations
        keep = [0]
        for i in range(1, len(loop)):
            if np.linalg.norm(loop[i] - loop[keep[-1]]) > tol:
                keep.append(i)
        if len(keep) >= 2 and np.linalg.norm(loop[keep[-1]] - loop[keep[0]]) <= tol:
            keep.pop()
        if len(keep) < 3:
            continue
        loop = loop[keep]
        nrm = np.zeros(3)
        for i in range(len(loop)):
            nrm += np.cross(loop[i], loop[(i + 1) % len(loop)])
        if nrm @ (np.asarray(tri.position(u)) - site) < 0:
            loop = loop[::-1]
        faces.append(loop)
    return faces


def _edge_ring(tri, v, u):
    """Tets around the Delaunay edge (v, u), in ring order.

    In each tet the edge's two side faces are (v, u, a) and (v, u, b)
    where {a, b} are the remaining vertices; stepping across (v, u, a)
    means moving to the neighbor opposite b.  Entering the next tet
    through a face with third vertex a, we continue by exiting across the
    neighbor opposite a.
    """
    start = None
    for t in tri.incident_tets(v):
        if u in tri._tv[t]:
            start = t
            break
    if start is None:
        raise InternalConsistencyError(f"no tet contains edge ({v}, {u})")
    others = [int(x) for x in tri._tv[start] if x != v and x != u]
    a, b = others
    ring = [start]
    # exit across face (v, u, a): neighbor opposite b
    li = int(np.where(tri._tv[start] == b)[0][0])
    cur = int(tri._tn[start, li])
    enter_third = a
    while cur != start:
        if cur == -1:
            raise InternalConsistencyError(
                f"open circumcenter ring around interior edge ({v}, {u})"
            )
        ring.append(cur)
        if len(ring) > 512:
            raise InternalConsistencyError("runaway edge ring traversal")
        c = next(
            int(x) for x in tri._tv[cur] if x != v and x != u and x != enter_third
        )
        li = int(np.where(tri._tv[cur] == enter_third)[0][0])
        cur = int(tri._tn[cur, li])
        enter_third = c
    return np.asarray(ring, dtype=np.int64)


def _fan_triangles(faces):
    """Stack the fan triangulations of all face loops into (k, 3, 3)."""
    tris = []
    for loop in faces:
        k = len(loop)
        if k < 3:
            continue
        t = np.empty((k - 2, 3, 3))
        t[:, 0] = loop[0]
        t[:, 1] = loop[1: k - 1]
        t[:, 2] = loop[2:k]
        tris.append(t)
    return np.concatenate(tris, axis=0) if tris else np.zeros((0, 3, 3))


def _polytope_measures(faces, site):
    """(volume, centroid, second moment about site) of a convex polytope
    given as outward-oriented face loops."""
    tris = _fan_triangles(faces)
    if len(tris) == 0:
        return 0.0, np.asarray(site, dtype=np.float64), 0.0
    ref = np.vstack(faces).mean(axis=0)
    q = tris - ref
    v = np.einsum("ij,ij->i", q[:, 0], _cross_rows(q[:, 1], q[:, 2])) / 6.0
    vol = float(v.sum())
    if vol <= 0:
        return 0.0, np.asarray(site, dtype=np.float64), 0.0
    cen = (v[:, None] * (ref + tris.sum(axis=1)) / 4.0).sum(axis=0) / vol
    p = tris - site
    p0 = ref - site
    s0 = p0 @ p0
    pp = np.einsum("ijk,ijk->i", p, p)  # sum of |p_i|^2 over the 3 corners
    cross01 = np.einsum("ij,ij->i", p[:, 0], p[:, 1])
    cross02 = np.einsum("ij,ij->i", p[:, 0], p[:, 2])
    cross12 = np.einsum("ij,ij->i", p[:, 1], p[:, 2])
    dot_with_ref = p.sum(axis=1) @ p0
    ss = s0 + pp + dot_with_ref + cross01 + cross02 + cross12
    mom = float((v * ss / 10.0).sum())
    return vol, cen, mom


@dataclass
class VoronoiCell:
    site: int
    volume: float
    centroid: np.ndarray
    tet_decomposition: np.ndarray  # (k, 4, 3): site-fan over the cell faces


def voronoi_cell(tri, v):
    """Explicit clipped Voronoi cell of vertex v with a positive
    tetrahedral decomposition fanned from the site."""
    site = np.asarray(tri.position(v))
    use_ring = False
    if not tri.is_corner[v]:
        star = tri.incident_tets(v)
        ccs = tri._cc[star]
        use_ring = bool(
            np.all(np.isfinite(ccs))
            and np.all(ccs >= tri.domain_min)
            and np.all(ccs <= tri.domain_max)
        )
    faces = ring_cell_faces(tri, v) if use_ring else clipped_cell_faces(tri, v)

    tets = []
    for loop in faces:
        a = loop[0]
        for i in range(1, len(loop) - 1):
            tets.append((site, a, loop[i], loop[i + 1]))
    tets = np.asarray(tets)
    vols = _tet_vols(tets)
    keep = vols > 1e-300
    tets = tets[keep]
    vols = vols[keep]
    volume = float(vols.sum())
    if volume <= 0:
        return VoronoiCell(v, 0.0, site.copy(), np.zeros((0, 4, 3)))
    centroid = (tets.mean(axis=1) * vols[:, None]).sum(axis=0) / volume
    return VoronoiCell(v, volume, centroid, tets)


def _tet_vols(tets):
    if len(tets) == 0:
        return np.zeros(0)
    u = tets[:, 1] - tets[:, 0]
    v = tets[:, 2] - tets[:, 0]
    w = tets[:, 3] - tets[:, 0]
    return np.einsum("ij,ij->i", u, _cross_rows(v, w)) / 6.0


def cell_volumes_bruteforce(tri, resolution=64):
    """Voxel-membership oracle: assign each voxel center to its nearest
    site and sum voxel volumes.  Test oracle only."""
    from scipy.spatial import cKDTree

    dmin, dmax = tri.domain_min, tri.domain_max
    n = resolution
    axes = [dmin[k] + (np.arange(n) + 0.5) / n * (dmax[k] - dmin[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    tree = cKDTree(tri.positions_array())
    _, owner = tree.query(pts, k=1)
    voxel = float(np.prod((dmax - dmin) / n))
    counts = np.bincount(owner, minlength=tri.n_vertices)
    return counts * voxel
