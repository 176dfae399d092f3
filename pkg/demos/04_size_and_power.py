# %%
"""
==========================
Size, power, and the limit
==========================

Small Monte Carlo studies: rejection rates under the null and under a shift,
and convergence of the statistic to its plug-in limit.
"""

from spatial_ksample import (
    Margin,
    ScenarioSpec,
    TestConfig,
    consistency_curve,
    monte_carlo_rejection_rate,
    plugin_C,
)

config = TestConfig(replicates=100, seed=1)

# %%
# Size at alpha = 0.05 (few trials, so expect noise).
mc = monte_carlo_rejection_rate(ScenarioSpec(n_i=(30, 30), seed=2), config, 60)
print(f"size: {mc.rate:.3f} over {mc.trials} trials")

# %%
# Power for a one-sd shift grows with the sample size.
for n in (10, 20, 40):
    sc = ScenarioSpec(n_i=(n, n), margins=(Margin.normal(0, 1), Margin.normal(1, 1)), seed=3)
    print(f"n_i={n}: power {monte_carlo_rejection_rate(sc, config, 40).rate:.3f}")

# %%
# The statistic settles at the plug-in constant; for two uniforms half a unit
# apart the constant is 1/6.
margins = (Margin.uniform(0, 1), Margin.uniform(0.5, 1.5))
print("C =", plugin_C(margins, [0.5, 0.5]))
for p in consistency_curve(ScenarioSpec(margins=margins, seed=4), [100, 400], 10):
    print(f"n_i={p.n}: mean T_n={p.mean_Tn:.4f}  C on the grid={p.C:.4f}")
