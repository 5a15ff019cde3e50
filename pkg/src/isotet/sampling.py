"""Drawing new grid points from the cell-wise sampling distribution.

Selection chain per draw (five uniforms, fixed consumption order): invert
the cell CDF, pick a tetrahedron of the cell's decomposition by volume,
then place a point uniformly in that tetrahedron via sorted-uniform
spacings (barycentric coordinates are the gaps of three sorted uniforms,
a Dirichlet(1,1,1,1) sample).
"""

import numpy as np

from .errors import ConfigError, DomainError, NoActiveCells
from .density import build_cdf, cdf_bin
from .voronoi import voronoi_cell


class RngStream:
    """Deterministic counter-based random stream (Philox)."""

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def uniform(self):
        return float(self._gen.random())

    def uniforms(self, n):
        return self._gen.random(n)


def uniform_in_tetra(a, b, c, d, rng):
    """Uniform point in the tetrahedron (a, b, c, d)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    vol6 = np.dot(np.cross(b - a, c - a), d - a)
    if vol6 == 0.0:
        raise DomainError("degenerate tetrahedron: skip and resample")
    s = sorted((rng.uniform(), rng.uniform(), rng.uniform()))
    w = (s[0], s[1] - s[0], s[2] - s[1], 1.0 - s[2])
    return w[0] * a + w[1] * b + w[2] * c + w[3] * d


class _CellCache:
    """Per-batch cache of cell decompositions and their volume CDFs."""

    def __init__(self, tri):
        self.tri = tri
        self.cells = {}

    def get(self, cid):
        entry = self.cells.get(cid)
        if entry is None:
            cell = voronoi_cell(self.tri, cid)
            if len(cell.tet_decomposition) == 0:
                entry = (cell, None)
            else:
                tets = cell.tet_decomposition
                u = tets[:, 1] - tets[:, 0]
                v = tets[:, 2] - tets[:, 0]
                w = tets[:, 3] - tets[:, 0]
                vols = np.einsum("ij,ij->i", u, np.cross(v, w)) / 6.0
                entry = (cell, build_cdf(vols))
            self.cells[cid] = entry
        return entry


def sample_point(state, tri, rng, cache=None):
    """One draw: returns (point, cell id).  Raises NoActiveCells when the
    distribution is exhausted."""
    if cache is None:
        cache = _CellCache(tri)
    u1 = rng.uniform()
    cid = state.cdf_lookup(u1)
    cell, tet_cdf = cache.get(cid)
    if tet_cdf is None:
        raise NoActiveCells(f"cell {cid} has empty decomposition")
    u2 = rng.uniform()
    k = cdf_bin(tet_cdf, u2)
    t = cell.tet_decomposition[k]
    p = uniform_in_tetra(t[0], t[1], t[2], t[3], rng)
    return p, cid


def sample_batch(state, tri, rng, n, max_retries=8):
    """Draw up to n points; draws landing within eps_merge of their cell
    site are rejected and redrawn (bounded retries, then skipped).

    Returns (points, rejected_count, exhausted_flag).  The state is not
    mutated; cell decompositions are cached for the duration of the batch.
    """
    if n < 1:
        raise ConfigError("batch size must be >= 1")
    cache = _CellCache(tri)
    eps2 = tri.eps_merge * tri.eps_merge
    points = []
    rejected = 0
    exhausted = False
    for _ in range(n):
        got = None
        for _attempt in range(max_retries + 1):
            try:
                p, cid = sample_point(state, tri, rng, cache)
            except NoActiveCells:
                exhausted = True
                break
            site = tri.position(cid)
            d2 = (
                (p[0] - site[0]) ** 2
                + (p[1] - site[1]) ** 2
                + (p[2] - site[2]) ** 2
            )
            if d2 >= eps2 and tri.contains_point(p, strict=True):
                got = p
                break
            rejected += 1
        if exhausted:
            break
        if got is not None:
            points.append(got)
    pts = np.asarray(points).reshape(-1, 3)
    return pts, rejected, exhausted
