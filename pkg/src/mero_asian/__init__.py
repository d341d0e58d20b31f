"""Asian option pricing under meromorphic Lévy processes.

The exponential functional I_q = int_0^{e(q)} exp(X_t) dt of a theta process
is handled through its Mellin transform, written as an infinite product of
gamma ratios over the roots of psi(z) = q. Prices follow by inverting that
transform in the strike and a Laplace transform in maturity.
"""

from .errors import (BracketError, ContinuationError, ContourError, ConvergenceError,
                     DegenerateError, DomainError, MeroError, ModelError, PoleError,
                     SamplerError, SingularError)
from .expfunc import (InterlacedPair, MellinEval, beta_product_mellin, correction_params,
                      log_gamma_ratio, log_mellin_tail_bound, mellin_corrected, mellin_eval,
                      mellin_hyperexp, mellin_truncated, phi, tail_moments)
from .model import (HyperExpModel, MeromorphicCoeffs, ThetaModel, calibrate_gamma, calibrate_mu,
                    hyperexp_from_theta, hyperexp_psi, levy_density, model_from_config,
                    model_to_config, theta_coeffs, theta_psi)
from .pricing import (MCConfig, PricingRequest, PricingResult, density, density_experiment,
                      increment_density, price, price_algo1, price_algo2, price_mc)
from .quad import (FilonGrid, InversionConfig, filon_integral, filon_weights,
                   inverse_laplace_f, inverse_mellin_density, inverse_mellin_h)
from .roots import RootSet, solve_complex, solve_complex_path, solve_real, verify_interlacing

__version__ = "0.1.0"
