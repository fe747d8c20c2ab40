"""Four-field mixed DG discretizations with superconvergent postprocessing on triangle meshes."""
from .errors import ConfigError, InvalidCoefficient, SolverFailure
from .mesh import Mesh, build_unit_square
from .spaces import BrokenSpace, DegreeTuple, EdgeSpace, Kind
from .forms import PenaltyParams
from .scalar import ScalarCase, assemble_scalar, sine_case, solve_scalar
from .elasticity import (ComplianceTensor, ElasticCase, assemble_elastic, sine_elastic_case,
                         solve_elastic, solve_hybrid)
from .postprocess import PostprocessConfig, Scheme, postprocess
from .study import RateTable, StudyConfig, compare_to_reference, compute_errors, run_study

__version__ = "0.1.0"
