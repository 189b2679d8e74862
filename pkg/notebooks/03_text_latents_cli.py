# ## Text latents and the command line
#
# Entries are mapped to 60 keyword indicators (10 emotion clusters, 6
# keywords each), compressed by an autoencoder to a few bits, and appended
# to the MaxEnt assessment state.

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from affect_dynamics import AeConfig, ClusterLexicon, SynthConfig, encode_binary, synthesize, train_ae
from affect_dynamics.clusters import assign_entry
from affect_dynamics.maxent import FitConfig
from affect_dynamics.pipeline import indicator_matrix, maxent_predict_assessment, train_maxent

lex = ClusterLexicon.default()
lex.names

ds = synthesize(SynthConfig(n_users=30, seed=2))
e = ds.entries()[0]
e.kind, e.text, e.state, assign_entry(e, lex).bits

X = indicator_matrix(ds, lex)
X.shape, X.sum(axis=0)[:12]

ae = train_ae(X, AeConfig(latent=4))
codes = np.array([encode_binary(ae, x) for x in X])
np.unique(codes, axis=0).shape

m = train_maxent(ds, "assessment", 4, ae, lex, fit_cfg=FitConfig(method="lbfgs"))
preds = maxent_predict_assessment(m, ds, ae, lex)
list(preds.items())[:3]

# ### The same run from the shell
#
# Every command logs its resolved configuration on standard error.

work = Path(tempfile.mkdtemp())


def cli(*args):
    cmd = [sys.executable, "-m", "affect_dynamics", *map(str, args)]
    proc = subprocess.run(cmd, cwd=work, capture_output=True, text=True)
    print(proc.stderr.strip().splitlines()[-1])
    return proc.returncode


cli("synth", "-o", "all.jsonl", "--users", "30", "--seed", "2")
cli("split", "--data", "all.jsonl", "--train-out", "train.jsonl", "--dev-out", "dev.jsonl")
cli("train-ae", "--data", "train.jsonl", "-o", "ae.json", "--latent", "4")
cli("train-maxent", "--data", "train.jsonl", "-o", "me.json", "--mode", "assessment", "--L", "4",
    "--ae", "ae.json", "--method", "lbfgs")
cli("predict", "--model", "me.json", "--ae", "ae.json", "--data", "dev.jsonl", "-o", "pred.jsonl")
cli("evaluate", "--pred", "pred.jsonl", "--gold", "dev.jsonl", "-o", "report.json")

json.loads((work / "report.json").read_text())["valence"]
