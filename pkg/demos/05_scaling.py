# Exact rescalings of the cost, checked at finite N.
from vclab import moments, spectral

params = spectral.make_params(0.05, 1.0, 1.0, 6.0)
for a in (16.0, 1 / 16):
    q1 = moments.first_scaling_check(params, a, 8)
    q2 = moments.second_scaling_check(params, a, 8)
    r1 = moments.first_scaling_check(params, a, 8, moments.RESCALED_FIRST_EXPONENT)
    r2 = moments.second_scaling_check(params, a, 8, moments.RESCALED_SECOND_EXPONENT)
    print(f"a = {a:g}: quoted exponents (3/8, 1/8) errors {q1:.3e}, {q2:.3e}")
    print(f"        rescaled exponents (-1/8, -3/8) errors {r1:.1e}, {r2:.1e}")
# The quoted exponents are off by exactly 1/2: rescaling x and t also rescales
# the boundary flux that carries u, which contributes a^(-1/2) to the control.
