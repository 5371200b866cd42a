"""Recover Burgers and Korteweg-de Vries equations with the weak formulation.

Run with ``python demos/weak_pde.py``.  Derivatives are never taken of the
data: integrating against compact bump functions moves them onto the test
functions, which is what makes noisy fields usable.
"""

from esindy import LibrarySpec, WeakConfig, add_noise, discover_pde, simulate_pde, weak_fit
from esindy.weak import pde_true_coefficients

spec = LibrarySpec(polynomial_degree=2, include_constant=True, spatial_derivative_order=3, include_mixed_terms=True)

for name, save_every in (("burgers", 2), ("kdv", 40)):
    field = simulate_pde(name, save_every=save_every)
    true = pde_true_coefficients(name, spec)
    print(f"\n{name}: true model   ", true.equations()[0])
    print(f"{name}: clean weak fit", weak_fit(field, spec).equations()[0])

burgers = simulate_pde("burgers", save_every=2)
noisy = add_noise(burgers, 0.05, 1)
res = discover_pde(noisy, spec, WeakConfig(seed=1))
print("\nburgers with 5 % noise, library bagging:", res.aggregated.equations()[0])
print("single weak fit on the same data:       ", weak_fit(noisy, spec, WeakConfig(seed=1)).equations()[0])
