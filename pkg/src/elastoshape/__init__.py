"""Mixed-boundary elasticity, admissible roof shapes and their numerical certification."""

__version__ = "0.1.0"

from .elasticity import (LoadSpec, MaterialModel, apriori_check, assemble, contract,
                         estimate_korn_constant, estimate_poincare_constant, green_residual,
                         solve, strain)
from .errors import (ConfigError, DomainError, ElastoShapeError, GeometryError, InfeasibleError,
                     InitializationError, NumericError, SizeError, SolverError, WellPosednessError)
from .functional import COMPLIANCE, FunctionalWeights, compliance, energy_functional
from .geometry import (Polygon, char_fn_distance, check_eps_cone, check_lower_regularity,
                       check_uniform_domain, check_upper_regularity, hausdorff_distance,
                       koch_prefractal)
from .mesh import (DiscreteBoundaryMeasure, Mesh, area, boundary_measure, build_roof_mesh, refine,
                   unit_square_mesh)
from .mosco import (DomainSequenceStudy, RobinForm, mconvergence_indicators, robin_form_apply,
                    solve_robin, weak_star_distance)
from .shapeopt import (AdmissibleClassConfig, RoofLoads, RoofShape, evaluate_shape, make_roof_shape,
                       optimize, project_admissible, self_weight_load, snow_load)

__all__ = [
    "AdmissibleClassConfig",
    "COMPLIANCE",
    "ConfigError",
    "DiscreteBoundaryMeasure",
    "DomainError",
    "DomainSequenceStudy",
    "ElastoShapeError",
    "FunctionalWeights",
    "GeometryError",
    "InfeasibleError",
    "InitializationError",
    "LoadSpec",
    "MaterialModel",
    "Mesh",
    "NumericError",
    "Polygon",
    "RobinForm",
    "RoofLoads",
    "RoofShape",
    "SizeError",
    "SolverError",
    "WellPosednessError",
    "apriori_check",
    "area",
    "assemble",
    "boundary_measure",
    "build_roof_mesh",
    "char_fn_distance",
    "check_eps_cone",
    "check_lower_regularity",
    "check_uniform_domain",
    "check_upper_regularity",
    "compliance",
    "contract",
    "energy_functional",
    "estimate_korn_constant",
    "estimate_poincare_constant",
    "evaluate_shape",
    "green_residual",
    "hausdorff_distance",
    "koch_prefractal",
    "make_roof_shape",
    "mconvergence_indicators",
    "optimize",
    "project_admissible",
    "refine",
    "robin_form_apply",
    "self_weight_load",
    "snow_load",
    "solve",
    "solve_robin",
    "strain",
    "unit_square_mesh",
    "weak_star_distance",
]
