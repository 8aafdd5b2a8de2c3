"""MRA marginalized maximum likelihood: quadrature likelihood, tilted moments, descent."""
from .mra_mle import (
    default_quadrature,
    grad_neg_loglik,
    hessian_quadform,
    load_settings,
    mle_estimate,
    neg_loglik,
    optimizer_config,
    run_mle,
    tilted_moments,
)

__all__ = [
    'default_quadrature', 'grad_neg_loglik', 'hessian_quadform', 'load_settings',
    'mle_estimate', 'neg_loglik', 'optimizer_config', 'run_mle', 'tilted_moments',
]
