import numpy as np
import pytest
from hypothesis import given, strategies as st

from sensei.attack import AttackConfig
from sensei.data import Dataset, gen_synthetic, reflect_counterfactual
from sensei.metric import FairMetric
from sensei.nn import MlpModel, backprop, forward, logit_sqdiff
from sensei.trainers import (BalancedSampler, ConfigError, DualState, TrainConfig, clp_step, dual_update,
                             erm_step, initial_state, sensei_step, sensr_step, train)

from conftest import constant_model, random_model

E1 = FairMetric(2, np.array([[1.0], [0.0]]))
ATTACK = AttackConfig(0.1, 3, 0.05, 2, 0.5)


def same_params(a: MlpModel, b: MlpModel) -> bool:
    return all(p.tobytes() == q.tobytes() for p, q in zip(a.params(), b.params()))


def batch(rng, n=8, d=2):
    return rng.uniform(-1, 1, (n, d)), rng.integers(0, 2, n)


def test_lambda_update_examples():
    assert dual_update(1.0, 0.1, 2.0, 0.5, 0.3) == 0.96
    assert dual_update(0.01, 1.0, 1.0, 0.0, 0.5) == 0.51
    assert dual_update(0.01, 1.0, 1.0, 1.0, 0.0) == 0.0


def test_sensei_rho_zero_is_erm(rng):
    st0 = DualState(random_model(rng, 2, 4, 2), lam=0.7)
    b = batch(rng)
    cfg = TrainConfig(lr=0.05, rho=0.0, eps=0.1, attack=ATTACK, method="sensei")
    a, _ = sensei_step(st0, b, E1, cfg, rng=np.random.default_rng(0))
    e, _ = erm_step(st0, b, cfg)
    assert same_params(a.model, e.model) and a.lam == e.lam


def test_sensei_step_follows_update_rule(rng):
    st0 = DualState(random_model(rng, 2, 4, 2), lam=0.3)
    x, y = batch(rng)
    cfg = TrainConfig(lr=0.05, rho=2.0, eps=0.01, attack=ATTACK, method="sensei")
    new, info = sensei_step(st0, (x, y), E1, cfg, rng=np.random.default_rng(5))
    from sensei.attack import worst_case_sensei
    from sensei.nn import logit_pair_backprop
    xa = worst_case_sensei(st0.model, E1, 0.3, x, ATTACK, rng=np.random.default_rng(5))
    cost = np.mean(((x - xa)[:, 1]) ** 2)
    assert new.lam == pytest.approx(max(0.0, 0.3 - 0.05 * 2.0 * (0.01 - cost)), abs=1e-15)
    _, g1 = backprop(st0.model, x, y)
    _, g2 = logit_pair_backprop(st0.model, x, xa)
    for p, q, a, b in zip(new.model.params(), st0.model.params(), g1.params(), g2.params()):
        assert np.allclose(p, q - 0.05 * (a + 2.0 * b), atol=1e-14)


def test_clp_identity_and_rho_zero_are_erm(rng):
    st0 = DualState(random_model(rng, 2, 4, 2))
    b = batch(rng)
    cfg = TrainConfig(lr=0.1, rho=3.0, method="clp")
    e, _ = erm_step(st0, b, cfg)
    c, _ = clp_step(st0, b, lambda x, r=None: np.array(x), cfg)
    assert same_params(c.model, e.model)
    c0, _ = clp_step(st0, b, reflect_counterfactual(0), TrainConfig(lr=0.1, rho=0.0, method="clp"))
    assert same_params(c0.model, e.model)


def test_clp_penalty_is_logit_distance(rng):
    st0 = DualState(random_model(rng, 2, 4, 2))
    x, y = batch(rng)
    _, info = clp_step(st0, (x, y), reflect_counterfactual(0), TrainConfig(lr=0.1, rho=1.0, method="clp"))
    xr = x * [-1, 1]
    assert info["d_y"] == pytest.approx(np.mean(logit_sqdiff(forward(st0.model, x), forward(st0.model, xr))), rel=1e-12)


def test_clp_without_generator_is_config_error(rng):
    with pytest.raises(ConfigError):
        clp_step(DualState(random_model(rng, 2, 2, 2)), batch(rng), None, TrainConfig(method="clp"))
    ds = gen_synthetic(40, 0)
    with pytest.raises(ConfigError):
        train(ds, E1, TrainConfig(steps=1, method="clp"))


def test_erm_lr_zero_keeps_params(rng):
    st0 = DualState(random_model(rng, 2, 3, 2))
    # train() rejects lr = 0, but the step itself must be an exact no-op
    new, _ = erm_step(st0, batch(rng), TrainConfig(lr=0.0))
    assert same_params(new.model, st0.model)


def test_erm_saturated_batch_is_fixed_point():
    m = MlpModel(np.array([[1.0, 0.0]]), np.zeros(1), np.array([[-40.0], [40.0]]), np.zeros(2))
    x = np.array([[1.0, 0.3], [2.0, -0.1]])
    new, _ = erm_step(DualState(m), (x, np.array([1, 1])), TrainConfig(lr=0.1))
    for p, q in zip(new.model.params(), m.params()):
        assert np.abs(p - q).max() <= 1e-12


def test_erm_single_step_hand_computed():
    # one hidden unit, identity on positive inputs; logits (0, v * relu(x))
    m = MlpModel(np.array([[1.0]]), np.zeros(1), np.array([[0.0], [0.5]]), np.zeros(2))
    new, _ = erm_step(DualState(m), (np.array([[2.0]]), np.array([1])), TrainConfig(lr=0.1))
    p1 = 1 / (1 + np.exp(-1.0))
    # d loss / d w2[1] = (p1 - 1) * hidden, hidden = 2
    assert new.model.w2[1, 0] == pytest.approx(0.5 - 0.1 * (p1 - 1) * 2.0, abs=1e-15)
    assert new.model.w2[0, 0] == pytest.approx(0.0 - 0.1 * (1 - p1) * 2.0, abs=1e-15)


def test_sensr_constant_model_reduces_to_erm(rng):
    st0 = DualState(constant_model(2, bias=[0.1, -0.2]))
    b = batch(rng)
    cfg = TrainConfig(lr=0.1, rho=1.0, attack=ATTACK, method="sensr")
    s, _ = sensr_step(st0, b, E1, cfg, rng=np.random.default_rng(0))
    e, _ = erm_step(st0, b, cfg)
    assert same_params(s.model, e.model)


def test_sensr_clamp_zero_keeps_lambda_zero(rng):
    st0 = DualState(random_model(rng, 2, 4, 2))
    cfg = TrainConfig(lr=0.1, rho=1.0, eps=0.0, attack=ATTACK, method="sensr", lambda_clamp=0.0)
    s, _ = sensr_step(st0, batch(rng), E1, cfg, rng=np.random.default_rng(0))
    assert s.lam == 0.0


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 5), b=st.integers(1, 64))
def test_balanced_sampler_counts(seed, k, b):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(k), rng.integers(0, k, 50)])
    s = BalancedSampler(labels, k, rng)
    for _ in range(1000 if seed % 10 == 0 else 20):
        idx = s.sample(b)
        counts = np.bincount(labels[idx], minlength=k)
        assert len(idx) == b
        assert np.all(np.abs(counts - b / k) < 1)


def test_sampler_needs_every_class(rng):
    with pytest.raises(ConfigError):
        BalancedSampler(np.array([0, 0, 2]), 3, rng)


@given(seed=st.integers(0, 2**16), rho=st.floats(0.1, 50), eps=st.floats(0, 1), clamp=st.floats(0, 5))
def test_lambda_stays_in_range(seed, rho, eps, clamp):
    ds = gen_synthetic(40, seed)
    cfg = TrainConfig(steps=5, batch=8, lr=0.5, rho=rho, eps=eps, attack=ATTACK, seed=seed,
                      method="sensei", hidden=3, lambda_clamp=clamp)
    st0 = initial_state(2, 2, cfg)
    state = st0
    for t in range(5):
        idx = np.arange(8 * t, 8 * t + 8)
        state, _ = sensei_step(state, (ds.features[idx], ds.labels[idx]), E1, cfg, rng=np.random.default_rng(t))
        assert 0.0 <= state.lam <= clamp


def test_train_zero_steps_returns_initial_state():
    ds = gen_synthetic(40, 0)
    cfg = TrainConfig(steps=0, seed=3, hidden=5)
    state, log = train(ds, E1, cfg)
    assert same_params(state.model, initial_state(2, 2, cfg).model)
    assert state.lam == 0.0 and log.rows == []


def test_train_deterministic(tmp_path):
    ds = gen_synthetic(200, 1)
    cfg = TrainConfig(steps=250, batch=16, lr=0.05, rho=1.0, attack=ATTACK, method="sensei", hidden=4, seed=11)
    a, la = train(ds, E1, cfg)
    b, lb = train(ds, E1, cfg)
    assert same_params(a.model, b.model) and a.lam == b.lam
    la.write_csv(tmp_path / "a.csv")
    lb.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "step,loss,lambda,mean_fair_cost"
    assert [r[0] for r in la.rows] == [0, 100, 200]


def test_erm_loss_trend_decreases():
    ds = gen_synthetic(500, 2)
    _, log = train(ds, None, TrainConfig(steps=2000, batch=32, lr=0.05, hidden=8))
    tenth = len(log.losses) // 10
    assert np.mean(log.losses[-tenth:]) < np.mean(log.losses[:tenth])


@pytest.mark.parametrize("kw", [dict(method="bogus"), dict(lr=0.0), dict(batch=0), dict(rho=-1.0),
                                dict(optimizer="rmsprop"), dict(lambda_clamp=-1.0)])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        train(gen_synthetic(40, 0), E1, TrainConfig(steps=1, **kw))


def test_metric_dim_mismatch_is_config_error():
    with pytest.raises(ConfigError):
        train(gen_synthetic(40, 0), FairMetric.euclidean(3), TrainConfig(steps=1, method="sensei", rho=1.0))


def test_single_class_rejected():
    ds = Dataset(np.zeros((4, 2)), np.zeros(4, dtype=int))
    with pytest.raises(ConfigError):
        train(ds, None, TrainConfig(steps=1))
