"""Implicit scalar fields with query accounting.

Every field maps R^3 -> R and counts each evaluation, because the whole
point of adaptive grid construction is to minimize the number of these
queries.  Counts are kept per scope ("pipeline", "metrics", ...) so that
extraction cost can be reported separately from evaluation done while
measuring quality.
"""

import threading
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError


class QueryCounter:
    """Thread-safe per-scope evaluation counter."""

    def __init__(self):
        self._lock = threading.Lock()
        self._by_scope = {}

    def add(self, scope, n):
        with self._lock:
            self._by_scope[scope] = self._by_scope.get(scope, 0) + n

    @property
    def total(self):
        with self._lock:
            return sum(self._by_scope.values())

    def get(self, scope):
        with self._lock:
            return self._by_scope.get(scope, 0)

    def snapshot(self):
        with self._lock:
            return dict(self._by_scope)


class _ScopeGuard:
    def __init__(self, field, scope):
        self.field = field
        self.scope = scope
        self.prev = None

    def __enter__(self):
        self.prev = self.field._scope
        self.field._scope = self.scope
        return self.field

    def __exit__(self, *exc):
        self.field._scope = self.prev
        return False


class ImplicitField:
    """Base class: subclasses implement ``_values(pts) -> ndarray``.

    ``_values`` receives an (n, 3) float64 array and must be a pure,
    deterministic function of the positions.
    """

    kind = "analytic-primitive"

    def __init__(self, iso_value=0.0):
        self.iso_value = float(iso_value)
        self.counter = QueryCounter()
        self._scope = "other"

    def counting(self, scope):
        """Context manager routing subsequent query counts to ``scope``."""
        return _ScopeGuard(self, scope)

    def _values(self, pts):
        raise NotImplementedError

    def evaluate(self, p):
        """Evaluate the field at one point; counts exactly one query."""
        pt = np.asarray(p, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pt)):
            raise DomainError(f"non-finite evaluation point {p!r}")
        self.counter.add(self._scope, 1)
        return float(self._values(pt.reshape(1, 3))[0])

    def evaluate_batch(self, ps):
        """Evaluate at an (n, 3) array of points; counts n queries."""
        pts = np.asarray(ps, dtype=np.float64).reshape(-1, 3)
        if pts.size == 0:
            return np.zeros(0, dtype=np.float64)
        if not np.all(np.isfinite(pts)):
            raise DomainError("non-finite evaluation point in batch")
        self.counter.add(self._scope, pts.shape[0])
        return np.asarray(self._values(pts), dtype=np.float64).reshape(-1)


class Sphere(ImplicitField):
    """Exact signed distance to a sphere."""

    def __init__(self, center=(0.0, 0.0, 0.0), radius=1.0):
        super().__init__()
        if radius <= 0:
            raise ConfigError("sphere radius must be positive")
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)

    def _values(self, pts):
        return np.linalg.norm(pts - self.center, axis=1) - self.radius


class Box(ImplicitField):
    """Exact signed distance to an axis-aligned box."""

    def __init__(self, center=(0.0, 0.0, 0.0), half_extents=(1.0, 1.0, 1.0)):
        super().__init__()
        self.center = np.asarray(center, dtype=np.float64)
        self.half_extents = np.asarray(half_extents, dtype=np.float64)
        if np.any(self.half_extents <= 0):
            raise ConfigError("box half extents must be positive")

    def _values(self, pts):
        q = np.abs(pts - self.center) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


class Torus(ImplicitField):
    """Exact signed distance to a z-axis torus: major radius R, tube r."""

    def __init__(self, center=(0.0, 0.0, 0.0), major_radius=1.0, minor_radius=0.25):
        super().__init__()
        if not (0 < minor_radius < major_radius):
            raise ConfigError("torus needs 0 < minor radius < major radius")
        self.center = np.asarray(center, dtype=np.float64)
        self.major_radius = float(major_radius)
        self.minor_radius = float(minor_radius)

    def _values(self, pts):
        q = pts - self.center
        ring = np.hypot(q[:, 0], q[:, 1]) - self.major_radius
        return np.hypot(ring, q[:, 2]) - self.minor_radius


class Gyroid(ImplicitField):
    """Triply periodic gyroid.  thickness > 0 gives the solid shell
    |g| - thickness; thickness = 0 gives the raw level-set function."""

    def __init__(self, scale=np.pi, thickness=0.0):
        super().__init__()
        if scale <= 0:
            raise ConfigError("gyroid scale must be positive")
        self.scale = float(scale)
        self.thickness = float(thickness)

    def _values(self, pts):
        s = self.scale
        x, y, z = pts[:, 0] * s, pts[:, 1] * s, pts[:, 2] * s
        g = np.sin(x) * np.cos(y) + np.sin(y) * np.cos(z) + np.sin(z) * np.cos(x)
        if self.thickness > 0:
            return np.abs(g) - self.thickness
        return g


class BumpSlab(ImplicitField):
    """Flat slab that turns into a field of sinusoidal bumps for x > 0.

    The surface is the graph z = h(x, y) with h = 0 on the flat half and
    h = amplitude * sin(freq x) sin(freq y) on the bumpy half, blended
    smoothly across a narrow band around x = 0.  Used to exercise
    adaptivity: a good extractor should spend far more vertices on the
    bumps than on the plane.
    """

    def __init__(self, amplitude=0.15, frequency=8.0, blend_width=0.25):
        super().__init__()
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.blend_width = float(blend_width)

    def _values(self, pts):
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        t = np.clip(x / self.blend_width, 0.0, 1.0)
        blend = t * t * (3.0 - 2.0 * t)
        h = blend * self.amplitude * np.sin(self.frequency * x) * np.sin(self.frequency * y)
        return z - h


class Transformed(ImplicitField):
    """Rigid transform plus uniform scale of another field.

    World point p maps to local q = R^T (p - t) / s; distances are
    rescaled by s so SDFs stay metrically correct.
    """

    def __init__(self, base, rotation=None, translation=(0.0, 0.0, 0.0), scale=1.0):
        super().__init__(iso_value=base.iso_value)
        if scale <= 0:
            raise ConfigError("scale must be positive")
        self.base = base
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        self.translation = np.asarray(translation, dtype=np.float64)
        self.scale = float(scale)

    def _values(self, pts):
        local = (pts - self.translation) @ self.rotation / self.scale
        return self.scale * self.base._values(local)


class Csg(ImplicitField):
    """Min/max composite of child fields (union, intersection, difference)."""

    kind = "csg-composite"
    _OPS = ("union", "intersection", "difference")

    def __init__(self, op, children):
        super().__init__()
        if op not in self._OPS:
            raise ConfigError(f"unknown csg op {op!r}; expected one of {self._OPS}")
        if len(children) < 2:
            raise ConfigError("csg composite needs at least two children")
        self.op = op
        self.children = list(children)

    def _values(self, pts):
        vals = [child._values(pts) for child in self.children]
        if self.op == "union":
            return np.minimum.reduce(vals)
        if self.op == "intersection":
            return np.maximum.reduce(vals)
        out = vals[0]
        for v in vals[1:]:
            out = np.maximum(out, -v)
        return out


class Constant(ImplicitField):
    """Constant field; handy for no-surface test cases."""

    def __init__(self, value=1.0):
        super().__init__()
        self.value = float(value)

    def _values(self, pts):
        return np.full(pts.shape[0], self.value)


class SampledGrid(ImplicitField):
    """Trilinear interpolation over a dense value lattice.

    values[ix, iy, iz] lives at bounds_min + index/(n-1) * extent.  Points
    outside the bounds are clamped to the boundary value.
    """

    kind = "sampled-grid"

    def __init__(self, values, bounds_min, bounds_max):
        super().__init__()
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ConfigError("sampled grid needs a 3-d value array, >= 2 per axis")
        self.bounds_min = np.asarray(bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(bounds_max, dtype=np.float64)
        if np.any(self.bounds_max <= self.bounds_min):
            raise ConfigError("grid bounds must have positive extent")

    @property
    def resolution(self):
        return self.values.shape

    def _values(self, pts):
        n = np.array(self.values.shape)
        u = (pts - self.bounds_min) / (self.bounds_max - self.bounds_min) * (n - 1)
        u = np.clip(u, 0.0, n - 1)
        i0 = np.minimum(u.astype(np.int64), n - 2)
        f = u - i0
        ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        v = self.values
        c000 = v[ix, iy, iz]
        c100 = v[ix + 1, iy, iz]
        c010 = v[ix, iy + 1, iz]
        c110 = v[ix + 1, iy + 1, iz]
        c001 = v[ix, iy, iz + 1]
        c101 = v[ix + 1, iy, iz + 1]
        c011 = v[ix, iy + 1, iz + 1]
        c111 = v[ix + 1, iy + 1, iz + 1]
        c00 = c000 * (1 - fx) + c100 * fx
        c10 = c010 * (1 - fx) + c110 * fx
        c01 = c001 * (1 - fx) + c101 * fx
        c11 = c011 * (1 - fx) + c111 * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        return c0 * (1 - fz) + c1 * fz

    @classmethod
    def load(cls, header_path):
        """Read a grid from a text header + flat binary file.

        Header lines: ``resolution nx ny nz``, ``bounds x0 y0 z0 x1 y1 z1``,
        ``data <filename>`` (relative to the header).  The binary file holds
        float64 little-endian values in x-fastest order.
        """
        header_path = Path(header_path)
        res = bounds = data_name = None
        for line in header_path.read_text().splitlines():
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "resolution":
                res = tuple(int(x) for x in parts[1:4])
            elif parts[0] == "bounds":
                bounds = [float(x) for x in parts[1:7]]
            elif parts[0] == "data":
                data_name = parts[1]
        if res is None or bounds is None or data_name is None:
            raise ConfigError(f"grid header {header_path} missing resolution/bounds/data")
        raw = np.fromfile(header_path.parent / data_name, dtype="<f8")
        nx, ny, nz = res
        if raw.size != nx * ny * nz:
            raise ConfigError("grid binary size does not match header resolution")
        # x-fastest on disk: index = ix + nx*(iy + ny*iz)
        values = raw.reshape(nz, ny, nx).transpose(2, 1, 0)
        return cls(values, bounds[:3], bounds[3:])

    def save(self, header_path):
        header_path = Path(header_path)
        data_name = header_path.stem + ".bin"
        nx, ny, nz = self.values.shape
        self.values.transpose(2, 1, 0).astype("<f8").tofile(header_path.parent / data_name)
        bmin, bmax = self.bounds_min, self.bounds_max
        header_path.write_text(
            f"resolution {nx} {ny} {nz}\n"
            f"bounds {bmin[0]:.17g} {bmin[1]:.17g} {bmin[2]:.17g} "
            f"{bmax[0]:.17g} {bmax[1]:.17g} {bmax[2]:.17g}\n"
            f"data {data_name}\n"
        )
