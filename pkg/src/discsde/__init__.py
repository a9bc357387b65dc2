"""Euler-Maruyama approximation of SDEs whose drift is discontinuous along a
hypersurface, with the near-identity transformation that removes the jump
and Monte Carlo tools for empirical convergence rates."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .geometry import Hyperplane, Hypersurface, Points1D, Sphere, surface_from_config  # noqa: E402
from .model import (  # noqa: E402
    Diffusion, PiecewiseDrift, SdeModel, build_model, example1, example2, gbm, jump_alpha,
    register_model, sign1d,
)
from .transform import TransformSpec  # noqa: E402
from .solver import (  # noqa: E402
    BrownianPath, EmTrajectory, em_continuous_eval, em_discrete, em_transformed, ito_residual,
    linear_interpolation, neighborhood_occupation, occupation_indicator_stat, sample_path,
)
from .experiments import (  # noqa: E402
    ErrorTable, HistogramReport, RateFit, empirical_diff, empirical_error, empirical_sup_error,
    fit_rate, occupation_decay, scaled_diff_histogram,
)
from .kernels import HAVE_COMPILED, default_backend  # noqa: E402
