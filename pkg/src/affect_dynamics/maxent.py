"""Pairwise maximum-entropy (Ising) model over binary affect state vectors.

The energy of a state is ``E(x) = -x.h - 0.5 x.J.x`` and ``P(x) ∝ exp(-E(x))``
over the valid states of a :class:`~affect_dynamics.codec.StateLayout`. The
normalizer is computed exactly by enumeration, so maximum likelihood uses
exact model moments.

Valid states factor into (valid affect one-hot configuration) x (any latent
assignment); the likelihood machinery works on the resulting
``(n_affect_configs, 2**L)`` matrix of log-weights instead of materializing
every state vector.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .codec import Mode, StateLayout, StateVector, affect_configs, latent_configs, valid_matrix
from .domain import AffectState
from .errors import BudgetExceeded, DataError, EmptyData, LayoutMismatch

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STATE_BUDGET = 2**22


@dataclass
class MaxEntModel:
    layout: StateLayout
    h: np.ndarray
    J: np.ndarray
    l2: float = 1e-3
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        n = self.layout.size
        self.h = np.asarray(self.h, dtype=np.float64)
        self.J = np.asarray(self.J, dtype=np.float64)
        if self.h.shape != (n,) or self.J.shape != (n, n):
            raise LayoutMismatch(f"h{self.h.shape}/J{self.J.shape} do not match layout size {n}")
        if not np.array_equal(self.J, self.J.T):
            raise ValueError("J must be symmetric")
        if np.any(np.diag(self.J) != 0):
            raise ValueError("J must have a zero diagonal")

    @classmethod
    def uniform(cls, layout: StateLayout, l2: float = 1e-3) -> "MaxEntModel":
        n = layout.size
        return cls(layout, np.zeros(n), np.zeros((n, n)), l2)

    def to_dict(self):
        iu = np.triu_indices(self.layout.size, k=1)
        return {
            "format_version": FORMAT_VERSION,
            "kind": "maxent",
            "mode": self.layout.mode.value,
            "L": self.layout.latent_bits,
            "h": self.h.tolist(),
            "J": self.J[iu].tolist(),
            "l2": self.l2,
        }

    @classmethod
    def from_dict(cls, d) -> "MaxEntModel":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind", "maxent") != "maxent":
            raise DataError("not a version-1 maxent model document")
        layout = StateLayout(Mode(d["mode"]), int(d["L"]))
        n = layout.size
        J = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        J[iu] = d["J"]
        J = J + J.T
        return cls(layout, np.array(d["h"], dtype=np.float64), J, float(d["l2"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MaxEntModel":
        return cls.from_dict(json.loads(text))


def _as_matrix(data, layout: StateLayout) -> np.ndarray:
    if isinstance(data, StateVector):
        data = [data]
    if isinstance(data, np.ndarray):
        X = data
    else:
        rows = []
        for x in data:
            if isinstance(x, StateVector):
                if x.layout != layout:
                    raise LayoutMismatch(f"state vector layout {x.layout} != model layout {layout}")
                rows.append(x.bits)
            else:
                rows.append(np.asarray(x))
        X = np.array(rows).reshape(len(rows), -1) if rows else np.zeros((0, layout.size))
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != layout.size:
        raise LayoutMismatch(f"data of shape {X.shape} does not match layout size {layout.size}")
    return X


def check_valid_rows(X: np.ndarray, layout: StateLayout):
    """Raise LayoutMismatch unless every row is a valid state of ``layout``."""
    if np.any((X != 0) & (X != 1)):
        raise LayoutMismatch("state vectors must be binary")
    if layout.mode is Mode.FREE:
        return
    blocks = [layout.valence_block, layout.arousal_block]
    if layout.mode is Mode.TRANSITION:
        blocks += [layout.dv_block, layout.da_block]
    for b in blocks:
        if np.any(X[:, b].sum(axis=1) != 1):
            raise LayoutMismatch("a one-hot block is not one-hot")
    if layout.mode is Mode.TRANSITION:
        v = X[:, layout.valence_block].argmax(1)
        a = X[:, layout.arousal_block].argmax(1)
        dv = X[:, layout.dv_block].argmax(1) - 4
        da = X[:, layout.da_block].argmax(1) - 2
        if np.any((v + dv < 0) | (v + dv > 4) | (a + da < 0) | (a + da > 2)):
            raise LayoutMismatch("a transition leaves the grid")


def _check_budget(layout: StateLayout):
    if layout.n_valid > STATE_BUDGET:
        raise BudgetExceeded(f"{layout.n_valid} valid states exceed the enumeration budget of {STATE_BUDGET}")


def energy(m: MaxEntModel, x) -> float:
    if isinstance(x, StateVector):
        if x.layout != m.layout:
            raise LayoutMismatch("state vector layout does not match model")
        x = x.bits
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.layout.size,):
        raise LayoutMismatch(f"vector length {x.shape} does not match layout size {m.layout.size}")
    return float(-x @ m.h - 0.5 * x @ m.J @ x)


def energies(m: MaxEntModel, X) -> np.ndarray:
    X = _as_matrix(X, m.layout)
    return -X @ m.h - 0.5 * np.einsum("ni,ij,nj->n", X, m.J, X)


def _blocks(m: MaxEntModel):
    a = m.layout.affect_size
    S, V = affect_configs(m.layout)
    Z = latent_configs(m.layout.latent_bits)
    return a, S.astype(np.float64), V, Z.astype(np.float64)


def log_weight_matrix(m: MaxEntModel) -> np.ndarray:
    """``-E`` for every valid state as a (n_affect_configs, 2**L) matrix."""
    _check_budget(m.layout)
    a, S, _, Z = _blocks(m)
    h, J = m.h, m.J
    ws = S @ h[:a] + 0.5 * np.einsum("ki,ij,kj->k", S, J[:a, :a], S)
    wz = Z @ h[a:] + 0.5 * np.einsum("ki,ij,kj->k", Z, J[a:, a:], Z)
    return ws[:, None] + wz[None, :] + (S @ J[:a, a:]) @ Z.T


def log_partition(m: MaxEntModel) -> float:
    return float(logsumexp(log_weight_matrix(m)))


def model_moments(m: MaxEntModel):
    """Exact ``(<x>, <x x^T>, log Z)`` under the model."""
    a, S, _, Z = _blocks(m)
    W = log_weight_matrix(m)
    logz = float(logsumexp(W))
    P = np.exp(W - logz)
    ps, pz = P.sum(axis=1), P.sum(axis=0)
    n = m.layout.size
    second = np.empty((n, n))
    second[:a, :a] = S.T @ (ps[:, None] * S)
    second[a:, a:] = Z.T @ (pz[:, None] * Z)
    cross = S.T @ P @ Z
    second[:a, a:] = cross
    second[a:, :a] = cross.T
    first = np.concatenate([S.T @ ps, Z.T @ pz])
    return first, second, logz


def data_moments(X: np.ndarray):
    return X.mean(axis=0), X.T @ X / len(X)


def probabilities(m: MaxEntModel) -> np.ndarray:
    """P(x) for every valid state, in :func:`codec.enumerate_valid` order."""
    W = log_weight_matrix(m)
    return np.exp(W - logsumexp(W)).reshape(-1)


def log_likelihood(m: MaxEntModel, data) -> float:
    """Mean log-likelihood of ``data`` (no regularization)."""
    X = _as_matrix(data, m.layout)
    return float(-energies(m, X).mean() - log_partition(m))


def objective(m: MaxEntModel, data) -> float:
    """Penalized mean log-likelihood that :func:`fit` maximizes."""
    penalty = m.l2 * (m.h @ m.h + 0.5 * np.sum(m.J**2))
    return log_likelihood(m, data) - penalty


def gradient(m: MaxEntModel, data):
    """Gradient of :func:`objective` w.r.t. ``h`` and the symmetric couplings.

    The J component is returned as a symmetric zero-diagonal matrix whose
    (i, j) entry is the derivative w.r.t. the shared coupling J_ij = J_ji.
    """
    X = _as_matrix(data, m.layout)
    mu_d, c_d = data_moments(X)
    return _gradient_from_moments(m, mu_d, c_d)


def _gradient_from_moments(m, mu_d, c_d):
    mu_m, c_m, logz = model_moments(m)
    gh = mu_d - mu_m - 2.0 * m.l2 * m.h
    gJ = c_d - c_m - 2.0 * m.l2 * m.J
    np.fill_diagonal(gJ, 0.0)
    gJ = 0.5 * (gJ + gJ.T)
    return gh, gJ, logz


@dataclass
class FitConfig:
    step: float = 0.1
    tol: float = 1e-6
    max_iters: int = 5000
    method: str = "gradient"


def fit(m0: MaxEntModel, data, cfg: Optional[FitConfig] = None) -> MaxEntModel:
    """Maximum-likelihood fit with exact moments.

    ``method="gradient"`` is full-batch gradient ascent with a fixed step;
    ``method="lbfgs"`` hands the same exact objective and gradient to
    L-BFGS. Both stop once the gradient max-norm drops below ``tol``.
    """
    cfg = cfg or FitConfig()
    layout = m0.layout
    _check_budget(layout)
    X = _as_matrix(data, layout)
    if len(X) == 0:
        raise EmptyData("cannot fit a MaxEnt model to zero samples")
    check_valid_rows(X, layout)
    mu_d, c_d = data_moments(X)
    if cfg.method == "gradient":
        m = _fit_gradient(m0, mu_d, c_d, cfg)
    elif cfg.method == "lbfgs":
        m = _fit_lbfgs(m0, mu_d, c_d, cfg)
    else:
        raise ValueError(f"unknown fit method {cfg.method!r}")
    m.info["n_samples"] = len(X)
    return m


def _fit_gradient(m0, mu_d, c_d, cfg):
    m = MaxEntModel(m0.layout, m0.h.copy(), m0.J.copy(), m0.l2)
    gnorm = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gh, gJ, _ = _gradient_from_moments(m, mu_d, c_d)
        gnorm = max(np.abs(gh).max(initial=0.0), np.abs(gJ).max(initial=0.0))
        if gnorm < cfg.tol:
            break
        m.h += cfg.step * gh
        m.J += cfg.step * gJ
    m.info.update(method="gradient", n_iter=it, grad_max=float(gnorm), converged=bool(gnorm < cfg.tol))
    log.debug("maxent gradient fit: %d iterations, grad max-norm %.3g", it, gnorm)
    return m


def _fit_lbfgs(m0, mu_d, c_d, cfg):
    n = m0.layout.size
    iu = np.triu_indices(n, k=1)

    def unpack(theta):
        J = np.zeros((n, n))
        J[iu] = theta[n:]
        return MaxEntModel(m0.layout, theta[:n].copy(), J + J.T, m0.l2)

    def neg(theta):
        m = unpack(theta)
        gh, gJ, logz = _gradient_from_moments(m, mu_d, c_d)
        ll = mu_d @ m.h + 0.5 * np.sum(c_d * m.J) - logz
        val = ll - m.l2 * (m.h @ m.h + 0.5 * np.sum(m.J**2))
        return -val, -np.concatenate([gh, gJ[iu]])

    theta0 = np.concatenate([m0.h, m0.J[iu]])
    res = minimize(neg, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iters, "gtol": cfg.tol * 1e-2, "ftol": 1e-15, "maxcor": 30})
    m = unpack(res.x)
    gh, gJ, _ = _gradient_from_moments(m, mu_d, c_d)
    gnorm = max(np.abs(gh).max(initial=0.0), np.abs(gJ).max(initial=0.0))
    m.info.update(method="lbfgs", n_iter=int(res.nit), grad_max=float(gnorm), converged=bool(gnorm < cfg.tol))
    return m


def sample(m: MaxEntModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact i.i.d. draws, returned as an (n, size) uint8 array."""
    X = valid_matrix(m.layout)
    p = probabilities(m)
    idx = rng.choice(len(X), size=n, p=p / p.sum())
    return X[idx]


def _require(m, mode):
    if m.layout.mode is not mode:
        raise LayoutMismatch(f"operation needs a {mode.value} layout, model is {m.layout.mode.value}")


def assessment_distribution(m: MaxEntModel, latent) -> np.ndarray:
    """P(v, a | latent) as a (5, 3) array."""
    _require(m, Mode.ASSESSMENT)
    z = np.asarray(latent, dtype=np.float64).reshape(-1)
    if z.size != m.layout.latent_bits:
        raise LayoutMismatch(f"latent has {z.size} bits, layout expects {m.layout.latent_bits}")
    a, S, V, _ = _blocks(m)
    h, J = m.h, m.J
    lw = S @ h[:a] + 0.5 * np.einsum("ki,ij,kj->k", S, J[:a, :a], S) + S @ (J[:a, a:] @ z)
    p = np.exp(lw - logsumexp(lw))
    out = np.zeros((5, 3))
    out[V[:, 0], V[:, 1]] = p
    return out


def predict_assessment(m: MaxEntModel, latent):
    """Conditional expectations ``(E[v | latent], E[a | latent])``."""
    p = assessment_distribution(m, latent)
    return float(p.sum(axis=1) @ np.arange(5)), float(p.sum(axis=0) @ np.arange(3))


def transition_distribution(m: MaxEntModel, current: AffectState) -> dict:
    """P(dv, da | v_t, a_t) with the latent bits summed out, as ``{(dv, da): p}``."""
    _require(m, Mode.TRANSITION)
    _, _, V, _ = _blocks(m)
    rows = np.flatnonzero((V[:, 0] == current.valence) & (V[:, 1] == current.arousal))
    lw = logsumexp(log_weight_matrix(m)[rows], axis=1)
    p = np.exp(lw - logsumexp(lw))
    return {(int(V[r, 2]), int(V[r, 3])): float(pr) for r, pr in zip(rows, p)}


def transition_table(m: MaxEntModel) -> dict:
    """Expected ``(dv, da)`` for each of the 15 current states."""
    _require(m, Mode.TRANSITION)
    _, _, V, _ = _blocks(m)
    lw = logsumexp(log_weight_matrix(m), axis=1)
    table = {}
    for v in range(5):
        for a in range(3):
            rows = np.flatnonzero((V[:, 0] == v) & (V[:, 1] == a))
            p = np.exp(lw[rows] - logsumexp(lw[rows]))
            table[(v, a)] = (float(p @ V[rows, 2]), float(p @ V[rows, 3]))
    return table


def predict_transition(m: MaxEntModel, current: AffectState):
    """Expected ``(dv, da)`` given the current state, latents marginalized."""
    dist = transition_distribution(m, current)
    dv = sum(p * d[0] for d, p in dist.items())
    da = sum(p * d[1] for d, p in dist.items())
    return float(dv), float(da)
