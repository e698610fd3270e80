"""Second-order time discretisation of the Kallianpur-Striebel filtering functional.

Fine-grid simulation of a partially observed diffusion, Picard (first-order)
and Itô-Taylor (second-order) discretised likelihoods, nested Monte Carlo
estimators of the filter and ``L_p`` convergence-rate studies.
"""

from .errors import (DegenerateNormalizationError, DomainError, GuardError, KSFilterError,
                     NumericError, UnboundedMomentError, UnsupportedModelError, UnsupportedOrderError)
from .estimator import (ConditionalEstimate, RateFit, RateReport, StudyResult, estimate_all,
                        estimate_conditional, fit_rate, lp_error_study)
from .functionals import (LogWeight, MeshGuardVerdict, XiVector, log_weight_oracle, log_weight_order2,
                          log_weight_picard, mesh_guard, update_recursive, xi_general)
from .model import (TEST_FUNCTIONS, AugmentedSensor, LinearParams, ScalarFunction, SignalModel,
                    apply_L0, apply_Lalpha, apply_Lr, bounded_model, const_model, lh_sup_bound,
                    linear_model)
from .multiindex import MultiIndex, concat, drop_first, drop_last, hierarchical_set, remainder_set
from .paths import (IntervalIncrements, Partition, PathBundle, exp_moment_bound_check,
                    interval_increments, iterated_integral, sample_bundle)
from .reference import KalmanState, kalman_bucy, prior_moment

__version__ = "0.1.0"
