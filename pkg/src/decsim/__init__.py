"""decsim: compile diagrammatic exterior-calculus equations into simulators.

Pipeline: parse equations into a relational IR, optionally glue component
models along shared variables, validate and schedule the operator hypergraph
into an ordered call list, bind discrete-exterior-calculus kernels over a
triangle mesh and its dual, and integrate the resulting ODE in time.
"""

from .compiler import (BoundaryMask, Call, ExecutableProgram, Kernel, Schedule,
                       attach_masks, bind, build_schedule, default_registry)
from .compose import (Box, OpenModel, Wire, WiringPattern, apply_pattern,
                      load_pattern, pattern_from_json_dict, pattern_to_json_dict)
from .dec import (DIAGONAL, GEOMETRIC, Cochain, FormType, OperatorMatrix,
                  dual_derivative, exterior_derivative, flat, hodge_star,
                  inverse_hodge_star, laplacian0, wedge, write_matrix_market)
from .ir import (DT, EquationSystem, ValidationReport, Violation, infer_types,
                 is_isomorphic, pretty, to_dot, validate)
from .mesh import (BARYCENTRIC, CIRCUMCENTRIC, DualMesh, TriMesh, build_dual,
                   generate_grid, load_obj, save_obj)
from .parser import parse_equations
from .solver import (EULER, RK4, SimState, SolverConfig, Trajectory,
                     diffusion_cfl_dt, integrate, total_quantity, write_csv,
                     write_vtk_series)

__version__ = "0.1.0"

__all__ = [
    "BARYCENTRIC", "CIRCUMCENTRIC", "DIAGONAL", "GEOMETRIC", "DT", "EULER", "RK4",
    "BoundaryMask", "Box", "Call", "Cochain", "DualMesh", "EquationSystem",
    "ExecutableProgram", "FormType", "Kernel", "OpenModel", "OperatorMatrix",
    "Schedule", "SimState", "SolverConfig", "Trajectory", "TriMesh",
    "ValidationReport", "Violation", "WiringPattern", "Wire",
    "apply_pattern", "attach_masks", "bind", "build_dual", "build_schedule",
    "default_registry", "diffusion_cfl_dt", "dual_derivative",
    "exterior_derivative", "flat", "generate_grid", "hodge_star", "infer_types",
    "integrate", "inverse_hodge_star", "is_isomorphic", "laplacian0",
    "load_obj", "load_pattern", "parse_equations", "pattern_from_json_dict",
    "pattern_to_json_dict", "pretty", "save_obj", "to_dot", "total_quantity",
    "validate", "wedge", "write_csv", "write_matrix_market", "write_vtk_series",
]
