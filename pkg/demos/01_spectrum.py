# Eigen-data of the adjoint operator, and why the Gram matrix is hard.
import numpy as np

from vclab import moments, spectral

params = spectral.make_params(epsilon=0.1, mach=1.0, length=1.0, horizon=6.0)
print(params)

# The eigenvalues grow like k^4, but for small eps the first few are dominated
# by the constant shift (5/16) M^(4/3) eps^(-1/3).
lam = spectral.eigenvalues(params, 8)
print("lambda_1..8 =", np.array2string(lam, precision=3))

for eps in (0.2, 0.1, 0.05, 0.02, 1e-3, 1e-5):
    print(f"eps = {eps:<7g} lambda_1 = {spectral.eigenvalue(params.replace(epsilon=eps), 1):10.4f}")
# lambda_1 first falls, then rises as eps shrinks: that turning point matters for
# the cost sweep in 03_cost_sweep.py.

# Eigenfunctions are tilted sines; in plain L^2 they are far from orthogonal.
H = spectral.eigenfunction_gram(params, 4)
d = np.sqrt(np.diag(H))
print("cosines between e_j, e_k:\n", np.array2string(H / np.outer(d, d), precision=3))

# Finite-difference check of P e_k = lambda_k e_k; the residual drops 4x per halving.
for n in (64, 128, 256, 512):
    print(f"h = 1/{n:<4d} residual = {spectral.apply_operator_residual(params, 1, 1 / n):.3e}")

# The Gram matrix of exp(-lambda_k (T - t)) on (0, T) gets worse fast.
for n in (4, 8, 12):
    g = moments.gram_matrix(spectral.eigenvalues_mp(params.replace(epsilon=1e-5), n), 6.0, 512)
    print(f"N = {n:2d}, eps = 1e-5: cond(G) = {float(g.condition_number):.3e}")
