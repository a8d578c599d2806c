# The explicit constants behind the time thresholds.
from scipy import optimize

from vclab import multiplier

x_star, i_min = multiplier.C1_minimizer()
print(f"I attains its minimum {i_min:.6f} at x = {x_star:.6f}, so C1 = {-i_min:.6f}")

# I has an elementary antiderivative; quadrature and closed form agree to ~1e-15.
for x in (0.3, x_star, 2.0):
    print(f"I({x:.4f}): quadrature {multiplier.I_quadrature(x):.15f}  closed {multiplier.I_closed_form(x):.15f}")

y = multiplier.C2_ARGUMENT
print(f"G({y:.4f}) = {multiplier.G_eval(y):.12f} (u-substitution)")
print(f"G({y:.4f}) = {multiplier.G_eval(y, 'split'):.12f} (split with algebraic weight)")

# Thresholds: the control cost decays for T above c L / |M| and blows up
# for T below theta L / |M|.
k = multiplier.analytic_constants()
print(f"c_plus = {k.c_plus:.5f}   c_minus = {k.c_minus:.5f}")
print(f"theta_plus = {k.lower_plus:.5f}   theta_minus = {k.lower_minus:.5f}")

# c_plus is stubborn: moving C1 - C2 by 0.1 barely shifts it.
for shift in (-0.1, 0.0, 0.1):
    X = optimize.brentq(lambda s: multiplier.threshold_polynomial("plus", s, k.C1 + shift, k.C2), 1, 3)
    print(f"C1 - C2 shifted by {shift:+.1f}: c_plus = {X**3:.4f}")

for case in ("plus", "minus"):
    r = multiplier.residue_integral(case)
    print(f"residue integral ({case}): {r.quadrature:.12f} vs {r.closed_form:.12f}")
