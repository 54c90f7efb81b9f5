"""Two-component diffusion with a one-sided interface law: ε-problems, cell
problems, homogenized limits and convergence studies."""
from .assembly import CoefficientField, InterfaceCoefficient
from .cell import (CellVI, EffectiveMap, EffectiveTensor, effective_tensor, solve_cell_perforated,
                   solve_cell_vi, solve_cell_whole, tabulate_effective_map)
from .config import ConfigError, RunConfig, load_config, parse_config
from .epsilon import EpsilonSolution, ProblemSpec, energy_norm, solve_epsilon
from .geometry import CellGeometry, ResolutionError, build_cell_mesh, build_epsilon_mesh
from .homogenized import (solve_linear_homogenized, solve_nonlinear_homogenized,
                          solve_obstacle_homogenized, square_mesh)
from .study import ConvergenceReport, StudyPlan, regime_of, run_study
from .vi import ConvergenceError, DiscreteVI, KKTError, SingularSpaceError, solve_vi

__version__ = "0.1.0"
