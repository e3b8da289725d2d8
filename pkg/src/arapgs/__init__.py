"""Drag-driven deformation toolkit for Gaussian-splatting scenes.

Load a scene, describe an edit as drag handles (plus optional anchors and a
region of interest), solve an as-rigid-as-possible deformation over a sparse
graph of the scene, propagate it to every Gaussian, and optionally refine
appearance in the edited image region.  A CPU renderer, a patch-based edit
metric, a CLI and an HTTP service round out the package.
"""

from ._kernels import backend as kernel_backend
from .arap import ArapResult, ArapSolver, arap_energy, fit_rotations, solve_arap
from .errors import (
    ArapGSError,
    ConfigError,
    ConstraintConflictError,
    DataError,
    EmptySelectionError,
    EnhancerError,
    FormatError,
    SchemaError,
    SolverError,
)
from .metrics import DaiResult, dai
from .neighborhood import DeformGraph, assign_constraints, build_graph, sample_subset
from .pipeline import DeformConfig, DeformOutput, deform, evaluate_drag, render_views
from .propagation import interpolation_weights, propagate_scene
from .refinement import (
    CommandEnhancer,
    IdentityEnhancer,
    RefinementConfig,
    RefineResult,
    SharpenEnhancer,
    make_enhancer,
    refine,
)
from .renderer import (
    ProjectedSplats,
    displacement_mask,
    pick_point,
    project_gaussians,
    render,
    render_u8,
)
from .splat_io import (
    BoxRegion,
    Camera,
    DragSpec,
    GaussianScene,
    SphereRegion,
    read_cameras,
    read_dragspec,
    read_ply,
    scenes_equal,
    write_cameras,
    write_dragspec,
    write_ply,
)

__version__ = "0.1.0"

__all__ = [
    "ArapGSError", "ConfigError", "ConstraintConflictError", "DataError",
    "EmptySelectionError", "EnhancerError", "FormatError", "SchemaError",
    "SolverError",
    "GaussianScene", "Camera", "DragSpec", "BoxRegion", "SphereRegion",
    "read_ply", "write_ply", "read_cameras", "write_cameras",
    "read_dragspec", "write_dragspec", "scenes_equal",
    "DeformGraph", "sample_subset", "build_graph", "assign_constraints",
    "ArapSolver", "ArapResult", "solve_arap", "arap_energy", "fit_rotations",
    "interpolation_weights", "propagate_scene",
    "ProjectedSplats", "project_gaussians", "render", "render_u8",
    "displacement_mask", "pick_point",
    "RefinementConfig", "RefineResult", "refine",
    "IdentityEnhancer", "SharpenEnhancer", "CommandEnhancer", "make_enhancer",
    "DaiResult", "dai",
    "DeformConfig", "DeformOutput", "deform", "render_views", "evaluate_drag",
    "kernel_backend",
    "__version__",
]
