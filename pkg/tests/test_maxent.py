import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affect_dynamics import maxent as me
from affect_dynamics.codec import Mode, StateLayout, encode, enumerate_valid, valid_matrix
from affect_dynamics.domain import AffectDelta, AffectState
from affect_dynamics.errors import BudgetExceeded, DataError, EmptyData, LayoutMismatch

FREE2 = StateLayout(Mode.FREE, 2)


def random_model(layout, rng, scale=0.5, l2=1e-3):
    n = layout.size
    J = np.triu(rng.normal(0, scale, (n, n)), 1)
    return me.MaxEntModel(layout, rng.normal(0, scale, n), J + J.T, l2)


def brute_states(layout):
    """Valid vectors built from the block definitions, independent of the codec enumerator."""
    def oh(n, i):
        return [int(j == i) for j in range(n)]
    out = []
    lat = list(itertools.product((0, 1), repeat=layout.latent_bits))
    if layout.mode is Mode.FREE:
        return [list(z) for z in lat]
    for v in range(5):
        for a in range(3):
            if layout.mode is Mode.ASSESSMENT:
                out += [oh(5, v) + oh(3, a) + list(z) for z in lat]
                continue
            for v2 in range(5):
                for a2 in range(3):
                    out += [oh(5, v) + oh(3, a) + oh(9, v2 - v + 4) + oh(5, a2 - a + 2) + list(z) for z in lat]
    return out


def brute(m):
    X = np.array(brute_states(m.layout), dtype=float)
    w = np.array([x @ m.h + 0.5 * x @ m.J @ x for x in X])
    logz = math.log(sum(math.exp(v) for v in w))
    p = np.exp(w - logz)
    return X, p, logz


def test_energy_examples():
    assert me.energy(me.MaxEntModel.uniform(FREE2), [1, 1]) == 0.0
    m = me.MaxEntModel(FREE2, [math.log(2), 0], np.zeros((2, 2)))
    assert me.energy(m, [1, 0]) == pytest.approx(-math.log(2), abs=1e-15)
    J = np.array([[0, math.log(3)], [math.log(3), 0]])
    assert me.energy(me.MaxEntModel(FREE2, [0, 0], J), [1, 1]) == pytest.approx(-math.log(3), abs=1e-15)
    with pytest.raises(LayoutMismatch):
        me.energy(m, [1, 0, 0])


def test_log_partition_examples():
    assert me.log_partition(me.MaxEntModel.uniform(FREE2)) == pytest.approx(math.log(4), abs=1e-12)
    m = me.MaxEntModel(FREE2, [math.log(2), 0], np.zeros((2, 2)))
    assert me.log_partition(m) == pytest.approx(math.log(6), abs=1e-12)
    J = np.array([[0, math.log(3)], [math.log(3), 0]])
    assert me.log_partition(me.MaxEntModel(FREE2, [0, 0], J)) == pytest.approx(math.log(6), abs=1e-12)


def test_model_invariants():
    with pytest.raises(ValueError):
        me.MaxEntModel(FREE2, np.zeros(2), np.array([[0, 1.0], [2.0, 0]]))
    with pytest.raises(ValueError):
        me.MaxEntModel(FREE2, np.zeros(2), np.eye(2))
    with pytest.raises(LayoutMismatch):
        me.MaxEntModel(FREE2, np.zeros(3), np.zeros((2, 2)))


@pytest.mark.parametrize("mode, L", [(Mode.FREE, 5), (Mode.ASSESSMENT, 0), (Mode.ASSESSMENT, 3),
                                     (Mode.TRANSITION, 0), (Mode.TRANSITION, 2)])
def test_partition_and_moments_match_brute_force(mode, L):
    m = random_model(StateLayout(mode, L), np.random.default_rng(L + 10 * len(mode.value)))
    X, p, logz = brute(m)
    assert me.log_partition(m) == pytest.approx(logz, abs=1e-10)
    mu, C, _ = me.model_moments(m)
    np.testing.assert_allclose(mu, p @ X, atol=1e-10)
    np.testing.assert_allclose(C, X.T @ (p[:, None] * X), atol=1e-10)
    # enumeration order and probabilities agree with the brute-force listing
    order = {tuple(x.astype(int)): q for x, q in zip(X, p)}
    got = me.probabilities(m)
    for x, q in zip(valid_matrix(m.layout), got):
        assert q == pytest.approx(order[tuple(int(b) for b in x)], abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([(Mode.ASSESSMENT, 2), (Mode.TRANSITION, 1), (Mode.FREE, 6)]))
def test_normalization(seed, ml):
    m = random_model(StateLayout(*ml), np.random.default_rng(seed), scale=2.0)
    assert abs(me.probabilities(m).sum() - 1.0) < 1e-9


def _fd_objective_gradient(m, X, eps=1e-5):
    n = m.layout.size
    gh = np.zeros(n)
    for i in range(n):
        for sgn in (1, -1):
            h = m.h.copy()
            h[i] += sgn * eps
            gh[i] += sgn * me.objective(me.MaxEntModel(m.layout, h, m.J, m.l2), X)
    gJ = np.zeros((n, n))
    for i, j in zip(*np.triu_indices(n, 1)):
        for sgn in (1, -1):
            J = m.J.copy()
            J[i, j] += sgn * eps
            J[j, i] += sgn * eps
            gJ[i, j] += sgn * me.objective(me.MaxEntModel(m.layout, m.h, J, m.l2), X)
    gJ = gJ + gJ.T
    return gh / (2 * eps), gJ / (2 * eps)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("layout", [StateLayout(Mode.FREE, 4), StateLayout(Mode.ASSESSMENT, 1)])
def test_gradient_matches_finite_differences(seed, layout):
    rng = np.random.default_rng(seed)
    m = random_model(layout, rng, l2=0.05)
    X = valid_matrix(layout)[rng.integers(0, layout.n_valid, 30)]
    gh, gJ, _ = me.gradient(m, X)
    nh, nJ = _fd_objective_gradient(m, X)
    a = np.concatenate([gh, gJ[np.triu_indices(layout.size, 1)]])
    b = np.concatenate([nh, nJ[np.triu_indices(layout.size, 1)]])
    assert np.linalg.norm(a - b) / (np.linalg.norm(a) + np.linalg.norm(b)) < 1e-6


@pytest.mark.parametrize("method", ["gradient", "lbfgs"])
def test_fit_uniform_data_gives_zero_model(method):
    lay = StateLayout(Mode.ASSESSMENT, 1)
    m = me.fit(me.MaxEntModel.uniform(lay, l2=0.0), valid_matrix(lay), me.FitConfig(method=method))
    assert np.abs(m.h).max() < 1e-6 and np.abs(m.J).max() < 1e-6
    assert m.info["converged"]


@pytest.mark.parametrize("method", ["gradient", "lbfgs"])
def test_fit_two_bit_moments(method):
    X = np.array([[1, 1], [1, 1], [1, 0], [1, 0], [0, 1], [0, 0]])
    assert (X[:, 0].mean(), X[:, 1].mean(), (X[:, 0] * X[:, 1]).mean()) == (4 / 6, 3 / 6, 2 / 6)
    m = me.fit(me.MaxEntModel.uniform(FREE2, l2=0.0), X, me.FitConfig(method=method))
    mu, C, _ = me.model_moments(m)
    assert abs(mu[0] - 2 / 3) < 1e-4 and abs(mu[1] - 1 / 2) < 1e-4 and abs(C[0, 1] - 1 / 3) < 1e-4


def test_fit_keeps_symmetry_and_rejects_bad_data():
    lay = StateLayout(Mode.TRANSITION, 1)
    rng = np.random.default_rng(0)
    X = valid_matrix(lay)[rng.integers(0, lay.n_valid, 50)]
    m = me.fit(me.MaxEntModel.uniform(lay), X, me.FitConfig(max_iters=50))
    assert np.array_equal(m.J, m.J.T) and not np.diag(m.J).any()
    with pytest.raises(EmptyData):
        me.fit(me.MaxEntModel.uniform(lay), np.zeros((0, lay.size)))
    bad = X.copy()
    bad[0, :5] = 0
    with pytest.raises(LayoutMismatch):
        me.fit(me.MaxEntModel.uniform(lay), bad)


def test_budget():
    m = me.MaxEntModel.uniform(StateLayout(Mode.TRANSITION, 15))
    with pytest.raises(BudgetExceeded):
        me.log_partition(m)


def test_predict_assessment_examples():
    lay = StateLayout(Mode.ASSESSMENT, 2)
    m = me.MaxEntModel.uniform(lay)
    assert me.predict_assessment(m, [0, 1]) == pytest.approx((2.0, 1.0), abs=1e-12)
    prev = -1.0
    for bias in [0.0, 1.0, 3.0, 10.0, 30.0]:
        h = np.zeros(lay.size)
        h[4] = bias
        v, a = me.predict_assessment(me.MaxEntModel(lay, h, np.zeros((10, 10))), [1, 0])
        assert v >= prev
        prev = v
    assert prev == pytest.approx(4.0, abs=1e-9)
    with pytest.raises(LayoutMismatch):
        me.predict_assessment(m, [1])


def _oracle_assessment(m, z):
    num_v = num_a = tot = 0.0
    for v in range(5):
        for a in range(3):
            x = encode(AffectState(v, a), None, z, m.layout).bits.astype(float)
            w = math.exp(x @ m.h + 0.5 * x @ m.J @ x)
            num_v, num_a, tot = num_v + v * w, num_a + a * w, tot + w
    return num_v / tot, num_a / tot


def _oracle_transition(m, s):
    num_v = num_a = tot = 0.0
    for x in enumerate_valid(m.layout):
        b = x.bits.astype(float)
        v, a = int(np.argmax(b[:5])), int(np.argmax(b[5:8]))
        if (v, a) != s.as_tuple():
            continue
        w = math.exp(b @ m.h + 0.5 * b @ m.J @ b)
        num_v += (int(np.argmax(b[8:17])) - 4) * w
        num_a += (int(np.argmax(b[17:22])) - 2) * w
        tot += w
    return num_v / tot, num_a / tot


@pytest.mark.parametrize("seed", range(3))
def test_predict_assessment_oracle(seed):
    rng = np.random.default_rng(seed)
    m = random_model(StateLayout(Mode.ASSESSMENT, 3), rng)
    z = rng.integers(0, 2, 3)
    v, a = me.predict_assessment(m, z)
    ov, oa = _oracle_assessment(m, z)
    assert abs(v - ov) < 1e-9 and abs(a - oa) < 1e-9
    assert 0 <= v <= 4 and 0 <= a <= 2


def test_predict_transition_examples():
    m = me.MaxEntModel.uniform(StateLayout(Mode.TRANSITION, 2))
    assert me.predict_transition(m, AffectState(2, 1)) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert me.predict_transition(m, AffectState(4, 2)) == pytest.approx((-2.0, -1.0), abs=1e-12)
    with pytest.raises(LayoutMismatch):
        me.predict_transition(me.MaxEntModel.uniform(StateLayout(Mode.ASSESSMENT)), AffectState(0, 0))


@pytest.mark.parametrize("seed", range(3))
def test_predict_transition_oracle_and_bounds(seed):
    m = random_model(StateLayout(Mode.TRANSITION, 2), np.random.default_rng(seed), scale=1.0)
    for s in [AffectState(0, 0), AffectState(3, 1), AffectState(4, 2)]:
        dv, da = me.predict_transition(m, s)
        ov, oa = _oracle_transition(m, s)
        assert abs(dv - ov) < 1e-9 and abs(da - oa) < 1e-9
        assert 0 <= s.valence + dv <= 4 and 0 <= s.arousal + da <= 2
    dv, da = me.predict_transition(m, AffectState(0, 0))
    assert dv >= 0 and da >= 0
    table = me.transition_table(m)
    assert table[(3, 1)] == pytest.approx(me.predict_transition(m, AffectState(3, 1)), abs=1e-12)
    dist = me.transition_distribution(m, AffectState(3, 1))
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12) and len(dist) == 15


def test_shift_invariance():
    """Adding a constant to every energy leaves predictions unchanged.

    For the assessment layout exactly one valence bit is on in every state, so
    adding c to the five valence biases shifts all energies by -c.
    """
    rng = np.random.default_rng(4)
    for lay in [StateLayout(Mode.ASSESSMENT, 2), StateLayout(Mode.TRANSITION, 1)]:
        m = random_model(lay, rng)
        h = m.h.copy()
        h[:5] += 7.3
        m2 = me.MaxEntModel(lay, h, m.J, m.l2)
        assert me.log_partition(m2) == pytest.approx(me.log_partition(m) + 7.3, abs=1e-9)
        if lay.mode is Mode.ASSESSMENT:
            assert me.predict_assessment(m2, [1, 0]) == pytest.approx(me.predict_assessment(m, [1, 0]), abs=1e-12)
        else:
            s = AffectState(1, 2)
            assert me.predict_transition(m2, s) == pytest.approx(me.predict_transition(m, s), abs=1e-12)


def test_json_round_trip():
    m = random_model(StateLayout(Mode.TRANSITION, 3), np.random.default_rng(9))
    again = me.MaxEntModel.from_json(m.to_json())
    assert np.array_equal(again.h, m.h) and np.array_equal(again.J, m.J) and again.layout == m.layout
    d = m.to_dict()
    assert len(d["J"]) == 25 * 24 // 2 and d["mode"] == "transition" and d["L"] == 3
    d["format_version"] = 2
    with pytest.raises(DataError):
        me.MaxEntModel.from_dict(d)


def test_sample_is_exact_in_distribution():
    m = random_model(StateLayout(Mode.FREE, 3), np.random.default_rng(1), scale=1.0)
    X = me.sample(m, 40000, np.random.default_rng(2))
    idx = X @ np.array([4, 2, 1])
    freq = np.bincount(idx, minlength=8) / len(X)
    np.testing.assert_allclose(freq, me.probabilities(m), atol=0.01)


def test_log_likelihood_matches_brute_force():
    m = random_model(StateLayout(Mode.ASSESSMENT, 1), np.random.default_rng(3))
    X = valid_matrix(m.layout)[[0, 5, 7]].astype(float)
    _, _, logz = brute(m)
    ll = np.mean([x @ m.h + 0.5 * x @ m.J @ x - logz for x in X])
    assert me.log_likelihood(m, X) == pytest.approx(ll, abs=1e-10)
