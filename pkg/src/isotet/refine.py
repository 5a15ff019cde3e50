"""Refinement of the adaptive grid around the iso-surface.

Each pass: recompute trim flags (a vertex's sampling density is zeroed
iff none of its incident tets crosses the iso-surface), probe the
midpoint of every crossing tet in one field batch, then insert the
midpoints whose residual exceeds the threshold into tets above the
volume floor.  A pass with zero successful insertions terminates the
loop: every crossing tet is then within tolerance or at the floor.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .cvt import relax_point
from .errors import PointMerged

_EPS_SIGN = 1e-12


def _eps_sign(alpha):
    return _EPS_SIGN * max(1.0, abs(alpha))


def signed_values(values, alpha):
    """Values shifted by alpha; exact zeros nudged positive so no vertex
    sits exactly on the surface during sign classification."""
    shifted = np.asarray(values, dtype=np.float64) - alpha
    eps = _eps_sign(alpha)
    return np.where(shifted == 0.0, eps, shifted)


def surface_crossing(values, alpha):
    """True iff the four corner values straddle the iso-value strictly."""
    s = signed_values(values, alpha)
    return bool(s.min() < 0.0 < s.max())


def tet_midpoint(positions, values, alpha):
    """Mean of the edge iso-crossing points of a crossing tet."""
    pos = np.asarray(positions, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    s = signed_values(vals, alpha)
    pts = []
    for i in range(4):
        for j in range(i + 1, 4):
            if (s[i] < 0.0) != (s[j] < 0.0):
                t = (alpha - vals[i]) / (vals[j] - vals[i])
                pts.append(pos[i] + t * (pos[j] - pos[i]))
    return np.mean(pts, axis=0)


def crossing_tet_ids(tri, density):
    """Ids of alive tets whose corners straddle the iso-value."""
    tids = tri.alive_tet_ids()
    if len(tids) == 0:
        return tids
    vals = density.f_values[tri._tv[tids]]
    s = vals - density.alpha
    eps = _eps_sign(density.alpha)
    s = np.where(s == 0.0, eps, s)
    mask = (s.min(axis=1) < 0.0) & (s.max(axis=1) > 0.0)
    return tids[mask]


def compute_trim_set(tri, density):
    """Vertices all of whose incident tets are non-crossing."""
    tids = tri.alive_tet_ids()
    crossing = np.zeros(tri.n_tet_slots, dtype=bool)
    crossing[crossing_tet_ids(tri, density)] = True
    has_crossing = np.zeros(tri.n_vertices, dtype=bool)
    cross_tets = tids[crossing[tids]]
    if len(cross_tets):
        has_crossing[tri._tv[cross_tets].reshape(-1)] = True
    return set(np.nonzero(~has_crossing)[0].tolist())


@dataclass
class PassReport:
    index: int
    examined: int
    inserted: int
    merged: int
    max_residual: float
    trimmed: int
    queries: int


@dataclass
class RefinementState:
    tau: float
    v_min: float
    cvt_iters: int = 3
    eps_cvt: float = None
    passes: list = dataclass_field(default_factory=list)
    total_inserted: int = 0
    total_merged: int = 0
    # (slot, generation) keys of tets already probed and found within
    # tolerance (or at the volume floor / merge-blocked): never re-probed.
    settled: set = dataclass_field(default_factory=set)

    @property
    def n_passes(self):
        return len(self.passes)

    @property
    def last(self):
        return self.passes[-1] if self.passes else None


def refine_pass(field, tri, density, state):
    """One refinement sweep; returns its PassReport.

    The worklist holds crossing tets not yet settled: a tet is settled
    once its midpoint residual is measured within tolerance, its volume
    is at the floor, or its midpoint merge-collides.  Tets destroyed by
    an insertion are replaced by fresh (unsettled) tets automatically.
    """
    alpha = density.alpha

    trim_set = compute_trim_set(tri, density)
    density.retrim(tri, trim_set)

    candidates = np.sort(crossing_tet_ids(tri, density))
    if len(candidates):
        unsettled = np.fromiter(
            (
                (int(t), int(tri._tgen[t])) not in state.settled
                for t in candidates
            ),
            dtype=bool,
            count=len(candidates),
        )
        worklist = candidates[unsettled]
    else:
        worklist = candidates

    report = PassReport(
        index=state.n_passes,
        examined=len(worklist),
        inserted=0,
        merged=0,
        max_residual=0.0,
        trimmed=len(trim_set),
        queries=0,
    )
    if len(worklist) == 0:
        state.passes.append(report)
        return report

    volumes = tri.tet_volumes(worklist)
    pos_all = tri.positions_array()
    mids = np.empty((len(worklist), 3))
    for k, t in enumerate(worklist):
        tv = tri._tv[t]
        mids[k] = tet_midpoint(pos_all[tv], density.f_values[tv], alpha)

    f_mid = field.evaluate_batch(mids)
    report.queries += len(mids)
    residuals = np.abs(f_mid - alpha)
    report.max_residual = float(residuals.max())

    for k, t in enumerate(worklist):
        t = int(t)
        if not tri._alive[t]:
            continue  # consumed by an earlier insertion this pass
        if residuals[k] <= state.tau or volumes[k] <= state.v_min:
            state.settled.add(tri.tet_key(t))
            continue
        try:
            v = tri.insert(mids[k])
        except PointMerged:
            report.merged += 1
            state.settled.add(tri.tet_key(t))
            continue
        pos = relax_point(tri, v, max_iters=state.cvt_iters, eps_cvt=state.eps_cvt)
        f_final = field.evaluate(pos)
        report.queries += 1
        density.update_after_insert(tri, v, f_final, affected=tri.last_insert_ring())
        report.inserted += 1

    state.passes.append(report)
    state.total_inserted += report.inserted
    state.total_merged += report.merged
    return report


def terminated(state):
    """True once a pass makes no insertion: every crossing tet is within
    tolerance, at the volume floor, or blocked by a merge."""
    last = state.last
    return last is not None and last.inserted == 0
