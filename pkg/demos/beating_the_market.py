# %% [markdown]
# # Entropy-weighted portfolio against the market in the Atlas model
#
# The log relative value splits into a change in the generating function
# plus the integral of a drift that only depends on the spacings.

# %%
import numpy as np

from rankflow.bounds import TailBoundQuery, corollary1_bounds
from rankflow.equilibrium import NuSpec, sample_nu
from rankflow.model import ModelParams, beta_constant, derive
from rankflow.portfolio import Entropy, EqualWeight, drift_u_tilde, master_formula_table, \
    nu_mean_of_drift

params = ModelParams.atlas(5)
G = Entropy()

# %% the decomposition closes up as the step shrinks
rows = np.array(master_formula_table(params, G, 1.0, [4e-4, 1e-4], range(8)))
for dt in (4e-4, 1e-4):
    res = np.abs(rows[rows[:, 1] == dt, 5])
    print(f"dt={dt:g}  median |residual|={np.median(res):.2e}")

# %% long-run drift: the stationary mean of the drift process
mean, se = nu_mean_of_drift(G, params, 200_000, np.random.default_rng(0))
print(f"entropy drift under nu: {mean:.4f} +/- {se:.4f}")
print("equal weight drift:", nu_mean_of_drift(EqualWeight(), params, 10)[0])

# %% how likely is the drift integral to fall short of its mean by r per unit time
ys = sample_nu(NuSpec.from_params(params), np.random.default_rng(1), size=200_000)
u = drift_u_tilde(G, ys) - mean
q = TailBoundQuery(t=100.0, r=0.01, eps=0.05, sigma2=float(u.var()), u_inf=float(np.abs(u).max()),
                   u_range=float(np.ptp(u)), rate=beta_constant(derive(params)))
for t in (100.0, 1000.0, 10000.0):
    c = corollary1_bounds(0.01, t, mean, q)
    print(f"t={t:>7.0f}  bound={c.upper_bound:.3g}")
