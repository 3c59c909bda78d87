"""Pricing and calibration of the interacting Black-Scholes model with arbitrage bubbles."""

__version__ = "0.1.0"

from ._jit import USE_NUMBA
from .bubble import (BubbleSpec, PotentialSeries, PowerLawRho, StepBubble, TabulatedBubble, ZeroBubble,
                     accumulated_potential, bubble_from_dict, bubble_from_potential, potential_from_bubble)
from .calibration import (CalibrationConfig, CalibrationResult, LMConfig, NewtonConfig, RhoFit, calibrate,
                          chi_squared, compare_models, compute_mispricing, extract_bubble, fit_rho_model,
                          potential_from_fit, solve_rho_pointwise)
from .market import (EstimationWindow, MarketSeries, estimate_params, load_series, simulate_gbm_path,
                     simulated_option_price, synthesize_market, write_series)
from .pde import GridSpec, PriceSurface, evaluate_on_path, solve_interacting
from .pricing import (MarketParams, OptionContract, QuadratureConfig, bs_closed_form, bs_delta,
                      bs_propagator_price, semiclassical_price)
