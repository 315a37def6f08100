"""Entanglement of two Coulomb-coupled levitated particles under trap modulation,
continuous measurement and optimal feedback, as Gaussian covariance dynamics."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ControllabilityError,
    ConvergenceError,
    GridMismatchError,
    InstabilityError,
    LeventError,
    PhysicalityError,
    PropagationError,
    ValidationError,
)
from .gaussian import (  # noqa: E402
    logarithmic_negativity,
    normal_mode_covariance,
    squeezing_degree,
    symplectic_eigenvalues,
    two_mode_squeezed_vacuum,
    vacuum,
)
from .model import ModelConfig, PhysicalParams, derive_physical  # noqa: E402
from .riccati import (  # noqa: E402
    backward_control_riccati,
    periodic_excess_noise,
    periodic_steady_state,
    stability_probe,
)
from .trajectory import ensemble_statistics, simulate_closed_loop  # noqa: E402
from .analysis import scan_2d, squeezing_vs_param, time_series  # noqa: E402
from .kernels import BACKEND  # noqa: E402
