"""Adaptive tetrahedral grids for query-efficient iso-surface extraction.

The grid is grown by sampling a density that concentrates near the
iso-surface of the input field, maintained over an incremental Delaunay
tetrahedralization with its clipped Voronoi dual; new points relax toward
their cell centroids, crossing tets are refined by midpoint probes, and
marching tetrahedra extracts the final triangle mesh.
"""

from .delaunay import Triangulation
from .density import DensityState, vertex_density
from .errors import (
    ConfigError,
    DomainError,
    InternalConsistencyError,
    IsotetError,
    NoActiveCells,
    PointMerged,
)
from .extract import TriangleMesh, extract_mesh, marching_tet
from .fields import (
    Box,
    BumpSlab,
    Constant,
    Csg,
    Gyroid,
    ImplicitField,
    SampledGrid,
    Sphere,
    Torus,
    Transformed,
)
from .mesh_sdf import MeshSdf
from .metrics import (
    EvalReport,
    baseline_marching_cubes,
    baseline_marching_tets_uniform,
    chamfer_l2,
    edge_metrics,
    evaluate_mesh,
    f1_score,
    normal_consistency,
)
from .pipeline import PipelineConfig, PipelineStats, run
from .refine import (
    RefinementState,
    refine_pass,
    surface_crossing,
    terminated,
    tet_midpoint,
)
from .sampling import RngStream, sample_batch, sample_point, uniform_in_tetra
from .cvt import cvt_energy, relax_point
from .voronoi import VoronoiCell, voronoi_cell

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BumpSlab",
    "ConfigError",
    "Constant",
    "Csg",
    "DensityState",
    "DomainError",
    "EvalReport",
    "Gyroid",
    "ImplicitField",
    "InternalConsistencyError",
    "IsotetError",
    "MeshSdf",
    "NoActiveCells",
    "PipelineConfig",
    "PipelineStats",
    "PointMerged",
    "RefinementState",
    "RngStream",
    "SampledGrid",
    "Sphere",
    "Torus",
    "Transformed",
    "TriangleMesh",
    "Triangulation",
    "VoronoiCell",
    "baseline_marching_cubes",
    "baseline_marching_tets_uniform",
    "chamfer_l2",
    "cvt_energy",
    "edge_metrics",
    "evaluate_mesh",
    "extract_mesh",
    "f1_score",
    "marching_tet",
    "normal_consistency",
    "refine_pass",
    "relax_point",
    "run",
    "sample_batch",
    "sample_point",
    "surface_crossing",
    "terminated",
    "tet_midpoint",
    "uniform_in_tetra",
    "vertex_density",
    "voronoi_cell",
]
