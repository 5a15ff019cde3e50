"""Local Lloyd relaxation of newly inserted grid points.

Only the point just inserted moves (older vertices already carry field
values sampled at their positions, which a move would invalidate).  A
move is realized as an exact undo of the insertion followed by
re-insertion at the cell centroid, so every intermediate state is a valid
Delaunay tetrahedralization and the vertex keeps its id.
"""

import numpy as np

from .errors import DomainError, InternalConsistencyError, PointMerged
from .voronoi import cell_measures


def relax_point(tri, v, max_iters=3, eps_cvt=None):
    """Move vertex v toward its clipped-cell centroid, up to max_iters
    times or until the step is shorter than eps_cvt.  v must be the most
    recently inserted vertex.  Returns the final position."""
    pos = np.asarray(tri.position(v), dtype=np.float64)
    if max_iters == 0:
        return pos
    if tri.is_corner[v]:
        raise DomainError("domain corners cannot be relaxed")
    if tri.last_inserted != v:
        raise InternalConsistencyError(
            "relax_point requires the most recently inserted vertex"
        )
    if eps_cvt is None:
        eps_cvt = 1e-4 * tri.diagonal
    for _ in range(max_iters):
        _, cen = cell_measures(
            tri, [v], want_centroid=True, star_map={v: tri.last_insert_star()}
        )
        c = cen[0]
        if float(np.linalg.norm(c - pos)) < eps_cvt:
            break
        tri.undo_last_insert()
        try:
            v2 = tri.insert(c)
        except (PointMerged, DomainError):
            # centroid collides with an existing vertex (or degenerated
            # onto the boundary): put the point back and stop
            v2 = tri.insert(pos)
            if v2 != v:
                raise InternalConsistencyError("vertex id changed during relax")
            break
        if v2 != v:
            raise InternalConsistencyError("vertex id changed during relax")
        pos = np.asarray(c, dtype=np.float64)
    return pos


def cvt_energy(tri, verts):
    """Sum over the given sites of the integral of |x - site|^2 over their
    clipped Voronoi cells."""
    verts = list(verts)
    if not verts:
        raise DomainError("cvt_energy needs at least one vertex")
    _, moments = cell_measures(tri, verts, want_moment=True)
    return float(np.sum(moments))


def local_energy(tri, v):
    """CVT energy of v's cell plus its one-ring cells: the part of the
    global energy a move of v can change."""
    return cvt_energy(tri, sorted(tri.affected_vertices(v)))
