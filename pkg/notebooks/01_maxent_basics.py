# ## A tiny MaxEnt model, end to end
#
# States are one-hot valence (5 bits) and arousal (3 bits), optionally
# followed by binary text latents. Because only 15 affect configurations are
# valid, the partition function is an exact sum.

import numpy as np

from affect_dynamics import maxent as me
from affect_dynamics.codec import Mode, StateLayout, valid_matrix
from affect_dynamics.domain import AffectState

layout = StateLayout(Mode.ASSESSMENT, latent_bits=2)
layout.size, layout.n_valid

# ### Uniform model
#
# With h = 0 and J = 0 every valid state is equally likely.

m = me.MaxEntModel.uniform(layout)
p = me.probabilities(m)
p.min(), p.max(), p.sum()

me.predict_assessment(m, np.array([0, 1]))

# ### Sampling from a random model and refitting it

rng = np.random.default_rng(0)
n = layout.size
J = np.triu(rng.normal(0, 0.5, (n, n)), 1)
truth = me.MaxEntModel(layout, rng.normal(0, 0.5, n), J + J.T)
X = me.sample(truth, 4000, rng)
X[:5]

fitted = me.fit(me.MaxEntModel.uniform(layout, l2=0.0), X, me.FitConfig(method="lbfgs"))
fitted.info

# fitted moments reproduce the sample moments
mu_d, c_d = me.data_moments(X.astype(float))
mu_m, c_m, _ = me.model_moments(fitted)
print(np.abs(mu_m - mu_d).max(), np.abs(c_m - c_d).max())

# and the distribution over all valid states is close to the generator's
print(np.abs(me.probabilities(fitted) - me.probabilities(truth)).max())

# ### Transition layout
#
# Transition vectors append the change (dv, da) as one-hot blocks. The
# uniform model predicts the mean of all reachable next states, which pulls
# extreme states back toward the middle of the grid.

tl = StateLayout(Mode.TRANSITION, 0)
mt = me.MaxEntModel.uniform(tl)
for s in [(0, 0), (2, 1), (4, 2)]:
    print(s, me.predict_transition(mt, AffectState(*s)))

valid_matrix(tl).shape
