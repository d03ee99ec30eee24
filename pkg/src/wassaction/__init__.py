"""Value functions on Wasserstein space for discrete probability measures."""
from .classical import (ParticlePath, ValueReport, a_of_t, classical_action, closed_form_grad_u,
                        closed_form_u, flow_map, hopf_lax, minimize_classical, solve_a_ode)
from .ensemble import (EnsemblePath, closed_form_flow, dp_check, ensemble_action, horizon,
                       metric_derivative_estimate, minimize_generalized, modified_hopf_lax,
                       poincare_check, reduce_linear, wasserstein_hopf_lax)
from .errors import (BeyondBlowup, DimensionMismatch, DualityDegenerate, EmptyMeasure,
                     HorizonExceeded, NoConvergence, NonUniform, NotOptimal, NotSuperlinear,
                     SolverFailure, TooLarge, ValidationError, WassactionError)
from .fields import linear, p_power, quadratic, softabs, zero
from .functionals import FunctionalValue, evaluate_functional, integral
from .measure import DiscreteMeasure, new_measure, pth_moment, pushforward, random_measure
from .problem import ProblemSpec, t_p
from .transport import (TransportPlan, brute_force_wasserstein, displacement_interpolate,
                        is_optimal_plan, wasserstein)

__version__ = "0.1.0"
