"""Simulation and verification laboratory for dissipative spin chains driven
by boundary noise.

A chain of scalar degrees of freedom on sites 1..n interacts through
nearest-neighbour linear couplings and a one-site dissipative drift; the
only randomness is a Brownian increment stream entering site 1.  The
package checks the structural hypotheses behind well-posedness and mixing
(`model.validate_assumptions`, `lyapunov`, `hormander`), runs the dynamics
with reproducible noise (`sim`, compiled kernels with a pure-NumPy
fallback), estimates invariant measures and mixing rates (`ergodics`),
steers the chain exactly through its coupling ladder (`control`), and
handles time-periodic coefficients (`periodic`).  `latticespin.cli` drives
everything from JSON experiment configs.
"""

from ._errors import (BlowupError, ConfigError, EstimationError,
                      LatticeSpinError, ModelEvaluationError, NoClosedForm,
                      UsageError)
from .kernels import BACKEND
from .model import (CouplingCoefficients, LocalDrift, SamplingGrid,
                    SpinChainModel, WeightFamily, constant_coupling,
                    cubic_drift, exponential_weights, linear_drift,
                    modulated_coupling, polynomial_weights, table_coupling,
                    table_weights, tanh_drift, validate_assumptions)
from .sim import NoisePath, Trajectory, make_noise, simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "LatticeSpinError",
    "UsageError",
    "ModelEvaluationError",
    "BlowupError",
    "EstimationError",
    "NoClosedForm",
    "ConfigError",
    "LocalDrift",
    "CouplingCoefficients",
    "SpinChainModel",
    "WeightFamily",
    "SamplingGrid",
    "linear_drift",
    "cubic_drift",
    "tanh_drift",
    "constant_coupling",
    "modulated_coupling",
    "table_coupling",
    "exponential_weights",
    "polynomial_weights",
    "table_weights",
    "validate_assumptions",
    "NoisePath",
    "Trajectory",
    "make_noise",
    "simulate",
]
