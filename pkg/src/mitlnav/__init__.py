"""Robust tube-based NMPC navigation with MITL task synthesis over a region abstraction."""

from .abstraction import EmptyWtsError, InvalidPlanError, Wts, build_wts, timed_run_of, timed_word_of
from .dynamics import (DisturbanceSignal, RobotModel, StateTrajectory, double_integrator,
                       estimate_j_lower, estimate_lipschitz, make_model, paper_model, rk4_step,
                       simulate)
from .fhocp import (FhocpConfig, InfeasibleFhocp, OcpSolution, RecedingHorizonController,
                    TerminalDesignError, TerminalIngredients, solve, terminal_ingredients)
from .geometry import Ball, Box, EmptySetError, erode_ball_by_ball, erode_box_by_ball
from .kernels import HAVE_COMPILED
from .mitl import (Tba, accepts, brute_force_satisfies, build_tba, compile_formula, parse,
                   validate_fragment)
from .navigator import (TransitionResult, check_assumption4, navigate, replay,
                        steady_state_reached)
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .synthesis import ExecutionReport, TimedPlan, execute_plan, product_search, verify_plan
from .tube import TightenedSets, TubeGains, design_gains, tighten, tighten_sets

__version__ = "0.1.0"
