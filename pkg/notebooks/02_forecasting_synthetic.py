# ## Forecasting affect change on synthetic diaries
#
# Users write entries whose valence and arousal drift back toward a
# personal mean. We compare the neural forecaster with the ridge baseline
# and the MaxEnt transition model.

import numpy as np

from affect_dynamics import (
    BEST_AROUSAL, BEST_VALENCE, ForecasterConfig, SynthConfig, combine_predictions, evaluate_transition,
    fit_change_baseline, predict_changes, predict_dataset, split, synthesize, train_forecaster,
)
from affect_dynamics.maxent import FitConfig
from affect_dynamics.pipeline import maxent_predict_transition, train_maxent

ds = synthesize(SynthConfig(n_users=100, rho=0.5, noise=0.5, seed=0))
train, dev = split(ds, 0.2, seed=0)
len(train.series), len(dev.series), ds.n_entries

# a peek at one series
[(e.seq, e.state.as_tuple()) for e in ds.series[0]][:8]

# ### Ridge on the previous state

base = fit_change_baseline(train)
rep = evaluate_transition(predict_changes(base, dev), dev)
print(rep.to_table())

# ### Forecaster, best configuration per target
#
# The valence model forecasts both changes from two steps of history; the
# arousal model uses one step and a larger user embedding.

fv = train_forecaster(train, ForecasterConfig(**BEST_VALENCE))
fa = train_forecaster(train, ForecasterConfig(**BEST_AROUSAL))
len(fv.history), len(fa.history)

pred = combine_predictions(predict_dataset(fv, dev), predict_dataset(fa, dev))
print(evaluate_transition(pred, dev).to_table())

# ### History length

for h in (1, 2, 4):
    m = train_forecaster(train, ForecasterConfig(**{**BEST_VALENCE, "history_len": h}))
    r = evaluate_transition(predict_dataset(m, dev), dev)
    print(h, round(r.valence.r_within, 3), round(r.arousal.r_within, 3))

# ### MaxEnt transition model
#
# The MaxEnt model sees no user identity, so it can only learn pooled
# regression toward the grid centre.

me_model = train_maxent(train, "transition", fit_cfg=FitConfig(method="lbfgs"))
print(evaluate_transition(maxent_predict_transition(me_model, dev), dev).to_table())
np.round(me_model.h[:8], 2)
