"""CRB-driven beamforming for target localization with semi-passive IRSs."""
from .baselines import (SCHEMES, baseline_equal_power, baseline_one_stage, baseline_random_phase,
                        proposed_two_stage, run_scheme)
from .beams import BeamSolution, RankDeficientError, make_beams
from .channel import ChannelSet, build_channels
from .crb import CrbReport, FimBlocks, SingularFimError, evaluate, position_fim
from .geometry import (GeometryCoefficients, Scenario, SolverConfig, bistatic_delay,
                       check_separability, delay_gradients)
from .multi import BracketError, SeparabilityError, bisection_solve, two_stage_multi
from .scenario import ExperimentPlan, generate_scenario, run_plan
from .single import (DegenerateGeometryError, dinkelbach_solve, fractional_problem,
                     one_stage_solve, two_stage_solve)

__version__ = "0.1.0"
