# %% [markdown]
# # Spacings of the Atlas model settle into a product of exponentials
#
# Only the lowest particle gets a push. The gaps between ranked particles
# end up independent and exponential, with rates given by the model constants.

# %%
import numpy as np

from rankflow.equilibrium import NuSpec, fit_geometric_rate, sample_nu, tv_decay_series
from rankflow.model import ModelParams, derive
from rankflow.sde import SimConfig, TimeAverage, monte_carlo

params = ModelParams.atlas(4)
d = derive(params)
print("alpha      ", d.alpha)
print("beta       ", d.beta)
print("nu means   ", 1 / d.alpha_tilde)

# %% time averages along simulated paths
cfg = SimConfig(dt=1e-2, horizon=200, seed=0)
avg = monte_carlo(params, cfg, 32, TimeAverage(lambda y: y, 50, 200))
print("simulated  ", np.round(avg.mean, 3), "+/-", np.round(avg.se, 3))

# %% exact draws from the stationary law
ys = sample_nu(NuSpec.from_params(params), np.random.default_rng(1), size=100_000)
print("exact      ", np.round(ys.mean(axis=0), 3))

# %% distance to equilibrium from a far start shrinks geometrically
p3 = ModelParams.atlas(3)
series = tv_decay_series(p3, [5.0, 5.0], [1, 2, 4, 8], n_paths=20_000, seed=2)
fit = fit_geometric_rate(series)
for t, v in zip(series.times, series.tv):
    print(f"t={t:>4.0f}  TV={v:.3f}")
print(f"fitted rate zeta={fit.zeta:.3f}  r2={fit.r2:.3f}")
