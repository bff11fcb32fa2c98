"""Shape optimization under uncertainty with a fictitious-domain penalty method."""
from .mesh import Mesh, SubdomainSpec, build_structured_mesh
from .optimizer import OptimizerParams, RunHistory, optimize, run_optimization
from .pde import ObjectiveSpec, PenalizedProblem, mc_expect
from .penalty import h_eps, h_eps_prime, sample_coefficient
from .problems import RunConfig, build, load_config, preset

__version__ = "0.1.0"
