# Control cost K_8 across an epsilon sweep, in two time regimes.
from vclab import experiments, moments, spectral

for T in (6.0, 0.3):
    config = experiments.ExperimentConfig(horizon=T, modes=8)
    rows = experiments.run_sweep(config)
    fit = experiments.fit_rate([(r.epsilon, r.log_cost) for r in rows])
    print(f"T = {T}")
    for r in rows:
        print(f"  eps = {r.epsilon:<5g} eps^(-1/3) = {r.inv_cbrt:.3f}  log K_8 = {r.log_cost:9.3f}  "
              f"cond = {r.condition_number:.2e}  bits = {r.precision_bits}")
    print(f"  slope {fit.slope:.3f}, R^2 {fit.r_squared:.3f}, expected sign {experiments.expected_slope_sign(config.params())}")

# At T = 6 the desk-scale sweep still sits where lambda_1 falls with eps, and
# K_8 ~ exp(-lambda_1 T) rises. Going to smaller eps shows the decay.
base = spectral.make_params(0.1, 1.0, 1.0, 6.0)
for eps in (1e-3, 3e-4, 1e-4, 3e-5, 1e-5):
    print(f"T = 6, eps = {eps:<6g} log K_8 = {moments.log_cost_estimate(base.replace(epsilon=eps), 8):.3f}")
