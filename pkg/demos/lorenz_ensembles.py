"""Identify the Lorenz system from noisy data with SINDy and its ensembles.

Run with ``python demos/lorenz_ensembles.py``.  A ten-second trajectory gets
2.5 % Gaussian noise; each method reports its support, its coefficient error
and, for the ensembles, the inclusion probabilities of the selected terms.

At this noise level a small constant term tends to survive thresholding:
noise in the library columns biases the least-squares fit.  The ensembles
flag it with a visibly lower inclusion probability than the true terms,
which is the practical use of ``ip`` as a confidence score.
"""

import numpy as np

from esindy import (
    LORENZ_U0,
    RegressionConfig,
    add_noise,
    coefficient_error,
    default_ensemble_config,
    identify,
    lorenz,
    simulate_ode,
    support_success,
)

system = lorenz()
clean = simulate_ode(system, LORENZ_U0, 10.0, 0.01)
data = add_noise(clean, 0.025, 0)
reg = RegressionConfig(lambda1=0.2)

for method in ("sindy", "bagging", "bragging", "library_bagging"):
    ens = None if method == "sindy" else default_ensemble_config(method, n_models=100, seed=0)
    xi, result = identify(method, data, system.library_spec, reg, ens)
    ok = support_success(system.true_coefficients, xi)
    err = coefficient_error(system.true_coefficients, xi)
    print(f"\n{method}: support {'correct' if ok else 'wrong'}, coefficient error {err:.4f}")
    for line in xi.equations():
        print("   ", line)
    if result is not None:
        ip = np.where(xi.support, result.inclusion_probabilities, np.nan)
        print("    inclusion probability of kept terms:", np.round(ip[~np.isnan(ip)], 2))
