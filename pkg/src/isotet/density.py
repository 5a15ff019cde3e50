"""Piecewise sampling density over the adaptive grid.

Each vertex carries its field value and a density that peaks on the
iso-surface: d = kappa / (gamma + |f - alpha|), with kappa an optional
per-vertex weight (1 by default; curvature adaptivity comes from midpoint
refinement instead).  A cell's sampling probability is density times
clipped Voronoi cell volume; the discrete CDF over active (untrimmed)
cells drives inverse-transform sampling and is rebuilt lazily.
"""

import numpy as np

from .errors import ConfigError, NoActiveCells
from .voronoi import cell_measures


def vertex_density(f_val, alpha, gamma):
    """Density of a grid vertex: 1 / (gamma + |f - alpha|)."""
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    return 1.0 / (gamma + abs(f_val - alpha))


def build_cdf(weights):
    """Normalized inclusive prefix sums of non-negative weights."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        raise NoActiveCells("all sampling weights are zero")
    cdf = np.cumsum(w) / total
    cdf[-1] = 1.0
    return cdf


def cdf_bin(cdf, u):
    """Index of the left-closed bin containing u in [0, 1)."""
    return int(np.searchsorted(cdf, u, side="right"))


class DensityState:
    def __init__(self, tri, alpha, gamma, kappa_fn=None):
        if gamma <= 0:
            raise ConfigError("gamma must be positive")
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.kappa_fn = kappa_fn
        n = tri.n_vertices
        self.f_values = np.full(n, np.nan)
        self.densities = np.zeros(n)
        self.volumes = np.zeros(n)
        self.trimmed = np.zeros(n, dtype=bool)
        self.has_value = np.zeros(n, dtype=bool)
        self._cdf = None
        self._active_ids = None
        self._dirty = True
        self.refresh_volumes(tri)

    # ------------------------------------------------------------------

    def _ensure_capacity(self, n):
        cur = len(self.f_values)
        if n <= cur:
            return
        grow = max(n, 2 * cur)
        for name, fill in (
            ("f_values", np.nan),
            ("densities", 0.0),
            ("volumes", 0.0),
        ):
            arr = np.full(grow, fill)
            arr[:cur] = getattr(self, name)
            setattr(self, name, arr)
        for name in ("trimmed", "has_value"):
            arr = np.zeros(grow, dtype=bool)
            arr[:cur] = getattr(self, name)
            setattr(self, name, arr)

    def _density_of(self, v, f_val):
        d = vertex_density(f_val, self.alpha, self.gamma)
        if self.kappa_fn is not None:
            d *= float(self.kappa_fn(v, f_val))
        return d

    def set_value(self, v, f_val):
        """Record the field value (and density) for vertex v."""
        self._ensure_capacity(v + 1)
        self.f_values[v] = f_val
        self.has_value[v] = True
        self.densities[v] = 0.0 if self.trimmed[v] else self._density_of(v, f_val)
        self._dirty = True

    def update_after_insert(self, tri, v, f_val, affected=None):
        """Store the value for a newly inserted vertex and refresh the
        volumes of the cells its insertion touched (v plus its one-ring);
        all other cached volumes stay bit-identical."""
        self._ensure_capacity(tri.n_vertices)
        self.set_value(v, f_val)
        if affected is None:
            affected = tri.affected_vertices(v)
        self.refresh_volumes(tri, sorted(affected))

    def bulk_update(self, tri, vids, f_vals, affected=None):
        """Value several vertices, then refresh the union of their
        affected cells once.  ``affected`` may be precollected (union of
        each insertion's one-ring at insertion time)."""
        self._ensure_capacity(tri.n_vertices)
        if affected is None:
            affected = set()
            for v in vids:
                affected.update(tri.affected_vertices(v))
        for v, f in zip(vids, f_vals):
            self.set_value(v, f)
        self.refresh_volumes(tri, sorted(affected))

    def refresh_volumes(self, tri, vids=None):
        if vids is None:
            vids = list(range(tri.n_vertices))
        self._ensure_capacity(tri.n_vertices)
        if vids:
            self.volumes[np.asarray(vids, dtype=np.int64)] = cell_measures(tri, vids)
        self._dirty = True

    def set_trimmed(self, verts):
        """Force the sampling density of these vertices to zero; the flag
        persists across later volume updates."""
        for v in verts:
            self._ensure_capacity(v + 1)
            self.trimmed[v] = True
            self.densities[v] = 0.0
        self._dirty = True

    def untrim(self, verts):
        for v in verts:
            if v < len(self.trimmed) and self.trimmed[v]:
                self.trimmed[v] = False
                if self.has_value[v]:
                    self.densities[v] = self._density_of(v, self.f_values[v])
        self._dirty = True

    def retrim(self, tri, trimmed_set):
        """Replace the trimmed set (refinement recomputes it each pass
        from incident-tet signs, so vertices can be revived)."""
        n = tri.n_vertices
        self._ensure_capacity(n)
        new = np.zeros(len(self.trimmed), dtype=bool)
        idx = np.fromiter(trimmed_set, dtype=np.int64, count=len(trimmed_set))
        if len(idx):
            new[idx] = True
        changed_on = new & ~self.trimmed
        changed_off = self.trimmed & ~new
        self.trimmed = new
        self.densities[changed_on] = 0.0
        for v in np.nonzero(changed_off)[0]:
            if self.has_value[v]:
                self.densities[v] = self._density_of(v, self.f_values[v])
        self._dirty = True

    # ------------------------------------------------------------------

    def probabilities(self, n=None):
        """Unnormalized per-cell weights d * volume (zero where unvalued
        or trimmed)."""
        n = len(self.f_values) if n is None else n
        p = self.densities[:n] * self.volumes[:n]
        p[~self.has_value[:n]] = 0.0
        return p

    def normalized_probabilities(self, n=None):
        p = self.probabilities(n)
        total = p.sum()
        if total <= 0:
            raise NoActiveCells("no active cells")
        return p / total

    def _rebuild(self):
        p = self.probabilities()
        active = np.nonzero(p > 0)[0]
        if len(active) == 0:
            self._cdf = None
            self._active_ids = np.zeros(0, dtype=np.int64)
        else:
            self._cdf = build_cdf(p[active])
            self._active_ids = active
        self._dirty = False

    @property
    def n_active(self):
        if self._dirty:
            self._rebuild()
        return len(self._active_ids)

    def cdf_lookup(self, u):
        """Vertex id of the cell whose CDF bin contains u in [0, 1)."""
        if not (0.0 <= u < 1.0):
            raise ConfigError(f"cdf lookup argument {u!r} outside [0, 1)")
        if self._dirty:
            self._rebuild()
        if self._cdf is None:
            raise NoActiveCells("no active cells")
        return int(self._active_ids[cdf_bin(self._cdf, u)])
