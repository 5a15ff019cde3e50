"""Mesh quality metrics and uniform-grid extraction baselines.

All sample-based metrics draw area-uniform surface samples with a seeded
counter-based generator, so reports are reproducible.  Inputs are
rescaled by the reference mesh's bounding cube before measuring (stated
in reports), which keeps thresholds comparable across models.
"""

import resource
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .extract import TriangleMesh, _crossing_point
from .mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE

DEFAULT_SAMPLES = 100_000
DEFAULT_F1_THRESH = 0.003  # x bounding-box diagonal of the (normalized) reference
DEFAULT_EDGE_ANGLE = 30.0  # degrees


@dataclass
class EvalReport:
    cd: float = np.nan
    nc: float = np.nan
    ecd: float = np.nan
    f1: float = np.nan
    ef1: float = np.nan
    queries: int = 0
    wall_time: float = 0.0
    peak_memory: int = 0
    extra: dict = dataclass_field(default_factory=dict)

    def as_dict(self):
        out = {
            "cd": self.cd, "nc": self.nc, "ecd": self.ecd,
            "f1": self.f1, "ef1": self.ef1, "queries": self.queries,
            "wall_time": self.wall_time, "peak_memory": self.peak_memory,
        }
        out.update(self.extra)
        return out


def peak_memory_bytes():
    """Best-effort process peak RSS."""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


# ---------------------------------------------------------------------------
# surface sampling


def sample_surface(mesh, n, seed=0):
    """Area-uniform samples: (points (n,3), unit normals (n,3))."""
    if mesh.n_triangles == 0:
        raise ConfigError("cannot sample an empty mesh")
    rng = np.random.Generator(np.random.Philox(seed))
    cross = mesh.triangle_normals()
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise ConfigError("mesh has zero surface area")
    probs = areas / total
    which = rng.choice(len(areas), size=n, p=probs)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a = mesh.vertices[mesh.triangles[which, 0]]
    b = mesh.vertices[mesh.triangles[which, 1]]
    c = mesh.vertices[mesh.triangles[which, 2]]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    nrm = cross[which]
    ln = np.linalg.norm(nrm, axis=1, keepdims=True)
    ln[ln == 0] = 1.0
    return pts, nrm / ln


def _nn(query_pts, target_pts):
    tree = cKDTree(target_pts)
    d, idx = tree.query(query_pts, k=1)
    return d, idx


def chamfer_l2(a, b, n_samples=DEFAULT_SAMPLES, seed=0):
    """Symmetric mean of squared nearest-neighbor surface distances."""
    pa, _ = sample_surface(a, n_samples, seed)
    pb, _ = sample_surface(b, n_samples, seed + 1)
    dab, _ = _nn(pa, pb)
    dba, _ = _nn(pb, pa)
    return 0.5 * (float(np.mean(dab**2)) + float(np.mean(dba**2)))


def normal_consistency(a, b, n_samples=DEFAULT_SAMPLES, seed=0):
    """Symmetrized mean absolute cosine between sample normals and their
    nearest neighbors' normals (orientation-agnostic)."""
    pa, na = sample_surface(a, n_samples, seed)
    pb, nb = sample_surface(b, n_samples, seed + 1)
    _, iab = _nn(pa, pb)
    _, iba = _nn(pb, pa)
    c1 = np.abs(np.einsum("ij,ij->i", na, nb[iab])).mean()
    c2 = np.abs(np.einsum("ij,ij->i", nb, na[iba])).mean()
    return 0.5 * (float(c1) + float(c2))


def f1_score(a, b, n_samples=DEFAULT_SAMPLES, dist_thresh=DEFAULT_F1_THRESH, seed=0):
    """Harmonic mean of precision (a near b) and recall (b near a)."""
    pa, _ = sample_surface(a, n_samples, seed)
    pb, _ = sample_surface(b, n_samples, seed + 1)
    dab, _ = _nn(pa, pb)
    dba, _ = _nn(pb, pa)
    precision = float(np.mean(dab < dist_thresh))
    recall = float(np.mean(dba < dist_thresh))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def feature_edge_samples(mesh, n, angle_thresh_deg=DEFAULT_EDGE_ANGLE, seed=0):
    """Length-weighted samples on edges whose dihedral exceeds the
    threshold (boundary edges count as features)."""
    edges = {}
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            edges.setdefault(key, []).append(t)
    fn = mesh.triangle_normals()
    ln = np.linalg.norm(fn, axis=1, keepdims=True)
    ln[ln == 0] = 1.0
    fn = fn / ln
    cos_thresh = np.cos(np.deg2rad(angle_thresh_deg))
    feature = []
    for (a, b), ts in edges.items():
        if len(ts) == 1:
            feature.append((a, b))
        elif len(ts) >= 2:
            c = float(fn[ts[0]] @ fn[ts[1]])
            if c < cos_thresh:
                feature.append((a, b))
    if not feature:
        return np.zeros((0, 3))
    feature = np.asarray(feature, dtype=np.int64)
    pa = mesh.vertices[feature[:, 0]]
    pb = mesh.vertices[feature[:, 1]]
    lengths = np.linalg.norm(pb - pa, axis=1)
    total = lengths.sum()
    if total <= 0:
        return np.zeros((0, 3))
    rng = np.random.Generator(np.random.Philox(seed))
    which = rng.choice(len(feature), size=n, p=lengths / total)
    t = rng.random(n)[:, None]
    return pa[which] * (1 - t) + pb[which] * t


def edge_metrics(a, b, angle_thresh_deg=DEFAULT_EDGE_ANGLE,
                 dist_thresh=DEFAULT_F1_THRESH, n_samples=20_000, seed=0):
    """(ECD, EF1) over feature-edge samples.

    Conventions when a side has no feature edges: both empty -> ECD 0 and
    EF1 1; one empty -> ECD is the mean squared distance from the other
    side's edge samples to the empty side's surface, EF1 0.
    """
    ea = feature_edge_samples(a, n_samples, angle_thresh_deg, seed)
    eb = feature_edge_samples(b, n_samples, angle_thresh_deg, seed + 1)
    if len(ea) == 0 and len(eb) == 0:
        return 0.0, 1.0
    if len(ea) == 0 or len(eb) == 0:
        full, holder = (eb, a) if len(ea) == 0 else (ea, b)
        surf, _ = sample_surface(holder, n_samples, seed + 2)
        d, _ = _nn(full, surf)
        return float(np.mean(d**2)), 0.0
    dab, _ = _nn(ea, eb)
    dba, _ = _nn(eb, ea)
    ecd = 0.5 * (float(np.mean(dab**2)) + float(np.mean(dba**2)))
    precision = float(np.mean(dab < dist_thresh))
    recall = float(np.mean(dba < dist_thresh))
    ef1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ecd, ef1


def normalization_transform(ref_mesh):
    """Scale/offset mapping the reference mesh into a unit bounding cube
    centered at the origin."""
    lo = ref_mesh.vertices.min(axis=0)
    hi = ref_mesh.vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    scale = float((hi - lo).max())
    if scale <= 0:
        scale = 1.0
    return center, scale


def _apply_norm(mesh, center, scale):
    return TriangleMesh(
        (mesh.vertices - center) / scale, mesh.triangles, mesh.provenance
    )


def evaluate_mesh(candidate, reference, n_samples=DEFAULT_SAMPLES,
                  dist_thresh=DEFAULT_F1_THRESH,
                  angle_thresh_deg=DEFAULT_EDGE_ANGLE, seed=0,
                  normalize=True):
    """Full metric suite of a candidate mesh against a reference.

    Both meshes are rescaled by the reference's bounding cube when
    normalize is set; distance thresholds are then in units of that cube.
    """
    if candidate.n_triangles == 0 or reference.n_triangles == 0:
        raise ConfigError("metric suite needs non-empty meshes")
    if normalize:
        center, scale = normalization_transform(reference)
        candidate = _apply_norm(candidate, center, scale)
        reference = _apply_norm(reference, center, scale)
    report = EvalReport()
    report.cd = chamfer_l2(candidate, reference, n_samples, seed)
    report.nc = normal_consistency(candidate, reference, n_samples, seed)
    report.f1 = f1_score(candidate, reference, n_samples, dist_thresh, seed)
    report.ecd, report.ef1 = edge_metrics(
        candidate, reference, angle_thresh_deg, dist_thresh,
        max(n_samples // 5, 1000), seed,
    )
    report.extra["normalized"] = normalize
    return report


# ---------------------------------------------------------------------------
# uniform-grid baselines


def _grid_axes(domain_min, domain_max, n):
    return [np.linspace(domain_min[k], domain_max[k], n) for k in range(3)]


def _evaluate_grid(field, domain_min, domain_max, n, chunk=2_000_000):
    """Dense lattice evaluation, chunked to bound memory; n points per
    axis, x-fastest layout, returns (n, n, n) array indexed [ix, iy, iz]."""
    ax = _grid_axes(domain_min, domain_max, n)
    values = np.empty(n * n * n, dtype=np.float64)
    per_slab = max(1, chunk // (n * n))
    pos = 0
    for z0 in range(0, n, per_slab):
        z1 = min(z0 + per_slab, n)
        gz, gy, gx = np.meshgrid(ax[2][z0:z1], ax[1], ax[0], indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        values[pos: pos + len(pts)] = field.evaluate_batch(pts)
        pos += len(pts)
    return values.reshape(n, n, n).transpose(2, 1, 0)


def marching_cubes_grid(values, domain_min, domain_max, alpha):
    """Classic table-driven marching cubes over a dense value grid with
    shared-edge vertex dedup.  Triangles oriented negative -> positive."""
    n = values.shape[0]
    ax = _grid_axes(domain_min, domain_max, n)
    below = values < alpha

    idx = np.zeros((n - 1, n - 1, n - 1), dtype=np.int32)
    for bit, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        idx |= (
            below[ox: ox + n - 1, oy: oy + n - 1, oz: oz + n - 1].astype(np.int32)
            << bit
        )
    active = np.nonzero((EDGE_TABLE[idx] != 0))
    if len(active[0]) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), {})
    configs = idx[active]
    cells = np.column_stack(active)  # (m, 3) base lattice coords

    # canonical lattice-edge key for each cube edge: (axis, i, j, k)
    def edge_key_arrays(cells_sel, e):
        c0, c1 = EDGE_CORNERS[e]
        o0 = CORNER_OFFSETS[c0]
        o1 = CORNER_OFFSETS[c1]
        base = cells_sel + np.minimum(o0, o1)
        axis = int(np.nonzero(o0 != o1)[0][0])
        key = ((axis * n + base[:, 0]) * n + base[:, 1]) * n + base[:, 2]
        return key, base, axis

    tri_keys = []
    for cfg in np.unique(configs):
        row = TRI_TABLE[cfg]
        edge_triples = [
            (int(row[i]), int(row[i + 1]), int(row[i + 2]))
            for i in range(0, 16, 3)
            if i + 2 < 16 and row[i] >= 0
        ]
        csel = cells[configs == cfg]
        for triple in edge_triples:
            cols = [edge_key_arrays(csel, e)[0] for e in triple]
            tri_keys.append(np.column_stack(cols))
    tri_keys = np.concatenate(tri_keys, axis=0)
    uniq, inverse = np.unique(tri_keys.reshape(-1), return_inverse=True)
    triangles = inverse.reshape(-1, 3).astype(np.int64)

    # vertex positions: decode each unique key and interpolate on its edge
    axis = uniq // (n * n * n)
    rem = uniq % (n * n * n)
    bi = rem // (n * n)
    bj = (rem // n) % n
    bk = rem % n
    p0 = np.column_stack([ax[0][bi], ax[1][bj], ax[2][bk]])
    oi = np.column_stack([bi, bj, bk])
    oj = oi.copy()
    oj[np.arange(len(uniq)), axis] += 1
    p1 = np.column_stack([ax[0][oj[:, 0]], ax[1][oj[:, 1]], ax[2][oj[:, 2]]])
    f0 = values[bi, bj, bk]
    f1 = values[oj[:, 0], oj[:, 1], oj[:, 2]]
    t = (alpha - f0) / (f1 - f0)
    verts = p0 + t[:, None] * (p1 - p0)

    mesh = TriangleMesh(verts, triangles, {})
    # orient: the tables give consistent winding; flip globally if the
    # signed volume disagrees with negative-inside convention
    signed6 = np.einsum(
        "ij,ij->i",
        mesh.vertices[mesh.triangles[:, 0]],
        np.cross(
            mesh.vertices[mesh.triangles[:, 1]] - mesh.vertices[mesh.triangles[:, 0]],
            mesh.vertices[mesh.triangles[:, 2]] - mesh.vertices[mesh.triangles[:, 0]],
        ),
    ).sum()
    if signed6 < 0:
        mesh.triangles = mesh.triangles[:, [0, 2, 1]]
    return mesh


def baseline_marching_cubes(field, resolution, domain_min, domain_max, alpha=0.0):
    """Uniform marching cubes: resolution^3 queries, standard tables."""
    if resolution < 2:
        raise ConfigError("marching cubes resolution must be >= 2")
    t0 = time.perf_counter()
    q0 = field.counter.total
    values = _evaluate_grid(field, domain_min, domain_max, resolution)
    mesh = marching_cubes_grid(values, domain_min, domain_max, alpha)
    report = EvalReport(
        queries=field.counter.total - q0,
        wall_time=time.perf_counter() - t0,
        peak_memory=peak_memory_bytes(),
    )
    report.extra["method"] = f"mc:{resolution}"
    return mesh, report


_KUHN_PERMS = (
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
)


def baseline_marching_tets_uniform(field, resolution, domain_min, domain_max, alpha=0.0):
    """Uniform marching tetrahedra: each of resolution^3 cubes split into
    six tets sharing the main diagonal; (resolution+1)^3 queries."""
    if resolution < 1:
        raise ConfigError("marching tets resolution must be >= 1")
    t0 = time.perf_counter()
    q0 = field.counter.total
    n = resolution + 1
    values = _evaluate_grid(field, domain_min, domain_max, n)
    ax = _grid_axes(domain_min, domain_max, n)

    def vid(i, j, k):
        return (i * n + j) * n + k

    flat = values.reshape(-1)

    # six tets per cube along the (0,0,0)-(1,1,1) diagonal
    base = np.arange(resolution)
    bi, bj, bk = np.meshgrid(base, base, base, indexing="ij")
    bi, bj, bk = bi.ravel(), bj.ravel(), bk.ravel()
    corner_ids = np.empty((len(bi), 8), dtype=np.int64)
    for c, (ox, oy, oz) in enumerate(
        ((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1))
    ):
        corner_ids[:, c] = vid(bi + ox, bj + oy, bk + oz)

    def corner_bit(off):
        return off[0] * 1 + off[1] * 2 + off[2] * 4

    tets = []
    for perm in _KUHN_PERMS:
        off = np.zeros(3, dtype=np.int64)
        path = [corner_bit(off)]
        for axis in perm:
            off = off.copy()
            off[axis] = 1
            path.append(corner_bit(off))
        tets.append(path)
    tets = np.asarray(tets)  # (6, 4) corner slots

    vert_index = {}
    vert_list = []
    tris = []
    pos_cache = np.column_stack(
        [np.repeat(ax[0], n * n),
         np.tile(np.repeat(ax[1], n), n),
         np.tile(ax[2], n * n)]
    )

    eps = 1e-12 * max(1.0, abs(alpha))

    for slot in tets:
        quad = corner_ids[:, slot]  # (m, 4) global vertex ids
        vals = flat[quad]
        s = vals - alpha
        s = np.where(s == 0.0, eps, s)
        crossing = (s.min(axis=1) < 0.0) & (s.max(axis=1) > 0.0)
        for row, srow in zip(quad[crossing], s[crossing]):
            _march_one_tet(
                row, srow, flat, pos_cache, alpha, vert_index, vert_list, tris
            )

    verts = np.asarray(vert_list, dtype=np.float64).reshape(-1, 3)
    mesh = TriangleMesh(
        verts,
        np.asarray(tris, dtype=np.int64).reshape(-1, 3),
        dict(vert_index),
    )
    report = EvalReport(
        queries=field.counter.total - q0,
        wall_time=time.perf_counter() - t0,
        peak_memory=peak_memory_bytes(),
    )
    report.extra["method"] = f"mt:{resolution}"
    return mesh, report


def _march_one_tet(vids, signs, flat_values, positions, alpha, vert_index,
                   vert_list, tris):
    neg = [i for i in range(4) if signs[i] < 0.0]
    pos = [i for i in range(4) if signs[i] >= 0.0]

    def edge_vertex(a, b):
        key = (a, b) if a < b else (b, a)
        idx = vert_index.get(key)
        if idx is None:
            idx = len(vert_list)
            vert_index[key] = idx
            vert_list.append(
                _crossing_point(
                    positions[key[0]], positions[key[1]],
                    flat_values[key[0]], flat_values[key[1]], alpha,
                )
            )
        return idx

    direction = (
        positions[vids[pos]].mean(axis=0) - positions[vids[neg]].mean(axis=0)
    )

    def orient(idxs):
        a, b, c = (np.asarray(vert_list[i]) for i in idxs)
        if float(np.dot(np.cross(b - a, c - a), direction)) < 0.0:
            return (idxs[0], idxs[2], idxs[1])
        return tuple(idxs)

    if len(neg) == 1 or len(neg) == 3:
        lone, others = (neg[0], pos) if len(neg) == 1 else (pos[0], neg)
        idxs = [edge_vertex(int(vids[lone]), int(vids[o])) for o in others]
        tris.append(orient(idxs))
    else:
        n0, n1 = neg
        p0, p1 = pos
        x = edge_vertex(int(vids[n0]), int(vids[p0]))
        y = edge_vertex(int(vids[n0]), int(vids[p1]))
        z = edge_vertex(int(vids[n1]), int(vids[p1]))
        w = edge_vertex(int(vids[n1]), int(vids[p0]))
        tris.append(orient([x, y, z]))
        tris.append(orient([x, z, w]))


# ---------------------------------------------------------------------------
# report files


def write_report(path, data):
    """Deterministic key=value text report."""
    lines = []
    for key in sorted(data):
        val = data[key]
        if isinstance(val, float):
            lines.append(f"{key} = {val:.12g}")
        else:
            lines.append(f"{key} = {val}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path):
    out = {}
    for line in open(path):
        if "=" not in line:
            continue
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def render_table(rows, columns=("method", "cd", "nc", "ecd", "f1", "ef1",
                                "queries", "time_s", "memory_mb")):
    """Fixed-width comparison table; rows are dicts."""
    header = [c.upper() for c in columns]
    table = [header]
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, float):
                cells.append(f"{v:.6g}")
            else:
                cells.append(str(v))
        table.append(cells)
    widths = [max(len(r[i]) for r in table) for i in range(len(columns))]
    lines = []
    for r in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
