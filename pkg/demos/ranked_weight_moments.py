# %% [markdown]
# # Moments of ranked market weights in the stationary Atlas model
#
# Quadrature over a Laplace transform, checked against direct sampling.

# %%
import numpy as np

from rankflow.atlas import AtlasSpec, mc_oracle_moment, moment

n = 5
print(" k   E[mu]     MC        E[mu^2]")
for k in range(1, n + 1):
    spec = AtlasSpec(n, k)
    m1, m2 = moment(spec, 1), moment(spec, 2)
    mc, se = mc_oracle_moment(spec, 1, 200_000, np.random.default_rng(k))
    print(f"{k:>2}  {m1:.5f}  {mc:.5f}  {m2:.5f}")

# %% the two-particle top weight
print("n=2 top weight:", moment(AtlasSpec(2, 2), 1), "log 2 =", np.log(2))
