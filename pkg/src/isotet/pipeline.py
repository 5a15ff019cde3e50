"""End-to-end adaptive extraction.

Phase A seeds the grid with the eight corner values and runs the
generation loop: sample a batch from the current density, relax each new
point toward its cell centroid, evaluate the field once per point at its
final position, update the density.  Phase B runs refinement passes
until no crossing tet needs a midpoint (or the pass cap).  Phase C runs
marching tetrahedra.

Every output byte is a pure function of (seed, config, field).
"""

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .cvt import relax_point
from .delaunay import Triangulation
from .density import DensityState
from .errors import ConfigError, PointMerged
from .extract import extract_mesh
from .metrics import peak_memory_bytes
from .refine import RefinementState, refine_pass, terminated
from .sampling import RngStream, sample_batch


@dataclass
class PipelineConfig:
    domain_min: tuple = (-1.0, -1.0, -1.0)
    domain_max: tuple = (1.0, 1.0, 1.0)
    alpha: float = 0.0
    gamma: float = None  # default 0.05 x domain diagonal
    tau: float = 1e-3
    v_min: float = None  # default (diagonal / 1024)^3
    generation_iters: int = 20
    batch_size: int = 64
    cvt_iters: int = 3
    seed: int = 0
    max_refine_passes: int = 64
    eps_merge: float = None  # default 1e-7 x diagonal
    eps_cvt: float = None  # default 1e-4 x diagonal
    use_cvt: bool = True
    use_refinement: bool = True
    validate_domain: bool = True

    def diagonal(self):
        lo = np.asarray(self.domain_min, dtype=np.float64)
        hi = np.asarray(self.domain_max, dtype=np.float64)
        return float(np.linalg.norm(hi - lo))

    def resolved(self):
        """Validated copy with all defaults filled in."""
        lo = np.asarray(self.domain_min, dtype=np.float64)
        hi = np.asarray(self.domain_max, dtype=np.float64)
        if np.any(hi <= lo):
            raise ConfigError("domain box must have positive extent")
        diag = self.diagonal()
        cfg = PipelineConfig(
            domain_min=tuple(float(x) for x in lo),
            domain_max=tuple(float(x) for x in hi),
            alpha=float(self.alpha),
            gamma=0.05 * diag if self.gamma is None else float(self.gamma),
            tau=float(self.tau),
            v_min=(diag / 1024.0) ** 3 if self.v_min is None else float(self.v_min),
            generation_iters=int(self.generation_iters),
            batch_size=int(self.batch_size),
            cvt_iters=int(self.cvt_iters),
            seed=int(self.seed),
            max_refine_passes=int(self.max_refine_passes),
            eps_merge=1e-7 * diag if self.eps_merge is None else float(self.eps_merge),
            eps_cvt=1e-4 * diag if self.eps_cvt is None else float(self.eps_cvt),
            use_cvt=bool(self.use_cvt),
            use_refinement=bool(self.use_refinement),
            validate_domain=bool(self.validate_domain),
        )
        if cfg.tau <= 0:
            raise ConfigError("tau must be positive")
        if cfg.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if cfg.v_min <= 0:
            raise ConfigError("v_min must be positive")
        if cfg.eps_merge <= 0 or cfg.eps_cvt <= 0:
            raise ConfigError("merge/relaxation tolerances must be positive")
        if cfg.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if cfg.generation_iters < 0 or cfg.max_refine_passes < 0 or cfg.cvt_iters < 0:
            raise ConfigError("iteration counts cannot be negative")
        return cfg


@dataclass
class PipelineStats:
    queries: int = 0
    corner_queries: int = 8
    inserted: int = 0
    probes: int = 0
    merged: int = 0
    rejected_samples: int = 0
    vertices: int = 0
    tets: int = 0
    refine_passes: int = 0
    max_residual: float = 0.0
    converged: bool = False
    mesh_vertices: int = 0
    mesh_triangles: int = 0
    wall_time: float = 0.0
    peak_memory: int = 0

    def as_dict(self):
        return dict(self.__dict__)

    def deterministic_dict(self):
        """Everything except timing/memory, for byte-stable report files."""
        out = self.as_dict()
        out.pop("wall_time")
        out.pop("peak_memory")
        return out


def _validate_domain(field, cfg, samples_per_face=5):
    """Closed surfaces must be strictly inside the box: every boundary
    sample of an SDF-like field must sit on the positive side."""
    lo = np.asarray(cfg.domain_min)
    hi = np.asarray(cfg.domain_max)
    k = samples_per_face
    t = (np.arange(k) + 0.5) / k
    pts = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        gu, gv = np.meshgrid(lo[u] + t * (hi[u] - lo[u]), lo[v] + t * (hi[v] - lo[v]))
        for val in (lo[axis], hi[axis]):
            face = np.empty((k * k, 3))
            face[:, axis] = val
            face[:, u] = gu.ravel()
            face[:, v] = gv.ravel()
            pts.append(face)
    with field.counting("validation"):
        vals = field.evaluate_batch(np.vstack(pts))
    if np.any(vals <= cfg.alpha):
        raise ConfigError(
            "the domain box does not enclose the iso-surface with margin "
            "(boundary samples reach the iso-value); grow the domain or "
            "disable validation"
        )


def run(field, config, grid_out=None):
    """Run the full pipeline.  Returns (mesh, stats, trace_lines).

    When grid_out is a dict, the final triangulation and density state
    are stored under keys "tri" and "density" (for grid dumps and
    diagnostics)."""
    cfg = config.resolved()
    t_start = time.perf_counter()

    if cfg.validate_domain and getattr(field, "closed_surface", True):
        _validate_domain(field, cfg)

    q_before = field.counter.get("pipeline")
    trace = []
    stats = PipelineStats()

    with field.counting("pipeline"):
        tri = Triangulation(cfg.domain_min, cfg.domain_max, eps_merge=cfg.eps_merge)
        density = DensityState(tri, cfg.alpha, cfg.gamma)
        corner_vals = field.evaluate_batch(tri.positions_array()[:8])
        density.bulk_update(tri, list(range(8)), corner_vals)
        trace.append("phase=init vertices=8 queries=8")

        rng = RngStream(cfg.seed)
        for it in range(cfg.generation_iters):
            pts, rejected, exhausted = sample_batch(
                density, tri, rng, cfg.batch_size
            )
            stats.rejected_samples += rejected
            new_ids = []
            final_pos = []
            for p in pts:
                try:
                    v = tri.insert(p)
                except PointMerged:
                    stats.merged += 1
                    continue
                if cfg.use_cvt and cfg.cvt_iters > 0:
                    pos = relax_point(
                        tri, v, max_iters=cfg.cvt_iters, eps_cvt=cfg.eps_cvt
                    )
                else:
                    pos = np.asarray(tri.position(v))
                new_ids.append(v)
                final_pos.append(pos)
            if new_ids:
                vals = field.evaluate_batch(np.asarray(final_pos))
                density.bulk_update(tri, new_ids, vals)
                stats.inserted += len(new_ids)
            trace.append(
                f"iter={it} phase=generate inserted={len(new_ids)} "
                f"rejected={rejected} vertices={tri.n_vertices} "
                f"queries={field.counter.get('pipeline') - q_before}"
            )
            if exhausted:
                trace.append(f"iter={it} phase=generate exhausted=1")
                break

        rstate = RefinementState(
            tau=cfg.tau,
            v_min=cfg.v_min,
            cvt_iters=cfg.cvt_iters if cfg.use_cvt else 0,
            eps_cvt=cfg.eps_cvt,
        )
        if cfg.use_refinement:
            for _ in range(cfg.max_refine_passes):
                rep = refine_pass(field, tri, density, rstate)
                stats.inserted += rep.inserted
                stats.probes += rep.examined
                stats.merged += rep.merged
                trace.append(
                    f"pass={rep.index} phase=refine examined={rep.examined} "
                    f"inserted={rep.inserted} merged={rep.merged} "
                    f"max_residual={rep.max_residual:.12g} trimmed={rep.trimmed} "
                    f"vertices={tri.n_vertices} "
                    f"queries={field.counter.get('pipeline') - q_before}"
                )
                if terminated(rstate):
                    break
            stats.refine_passes = rstate.n_passes
            last = rstate.last
            stats.max_residual = last.max_residual if last else 0.0
            stats.converged = (
                terminated(rstate) and (last is None or last.merged == 0)
            )
            if not stats.converged:
                trace.append(
                    f"phase=refine flagged=residual-above-tau "
                    f"passes={rstate.n_passes}"
                )
        else:
            stats.converged = True

        values = density.f_values[: tri.n_vertices]
        mesh = extract_mesh(tri, values, cfg.alpha)
        trace.append(
            f"phase=extract mesh_vertices={mesh.n_vertices} "
            f"mesh_triangles={mesh.n_triangles}"
        )

    stats.queries = field.counter.get("pipeline") - q_before
    stats.vertices = tri.n_vertices
    stats.tets = tri.n_tets
    stats.mesh_vertices = mesh.n_vertices
    stats.mesh_triangles = mesh.n_triangles
    stats.wall_time = time.perf_counter() - t_start
    stats.peak_memory = peak_memory_bytes()
    if grid_out is not None:
        grid_out["tri"] = tri
        grid_out["density"] = density
    return mesh, stats, trace
