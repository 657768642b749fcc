"""Proximal causal inference when bridge functions are not unique.

The estimator forms the sieve solution set of the outcome bridge equation,
selects its minimum-length member, debiases the plug-in mean with an
estimated representer and reports influence-function Wald intervals.
Exact discrete oracles and simulation designs ship alongside for checking.
"""

__version__ = "0.1.0"

from .basis import BasisSpec
from .data import Dataset
from .errors import ProxBridgeError
from .inference import EffectReport, EstimateReport, EstimatorConfig, estimate
from .oracle import DiscreteJoint, bridge_solution_set, nonunique_preset, true_counterfactual_mean
from .simulation import DgpSpec, McConfig, McResult, preset, run_monte_carlo

__all__ = [
    "BasisSpec",
    "Dataset",
    "DgpSpec",
    "DiscreteJoint",
    "EffectReport",
    "EstimateReport",
    "EstimatorConfig",
    "McConfig",
    "McResult",
    "ProxBridgeError",
    "bridge_solution_set",
    "estimate",
    "nonunique_preset",
    "preset",
    "run_monte_carlo",
    "true_counterfactual_mean",
]
