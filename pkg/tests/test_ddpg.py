import math

import numpy as np
import pytest
from scipy.stats import chisquare

from litstar.ddpg import (ReplayBuffer, RewardFactors, Trainer, TrainerConfig, Transition,
                          actor_loss_and_grads, critic_loss_and_grads, critic_update, decay_kappa,
                          per_sample, reward_B, reward_K, train)
from litstar.fuzzy import tsk_value
from litstar.neuralnet import forward, zero_network
from litstar.space import make_random_rectangles, make_rng


def test_decay_kappa():
    assert decay_kappa(0, 1.0, 0.2) == pytest.approx(math.log2(6.8), abs=1e-12)
    assert decay_kappa(6, 1.0, 0.2) == 0.2
    assert decay_kappa(7, 1.0, 0.2) == 0.2
    assert decay_kappa(100, 1.0, 0.2) == 0.2
    with pytest.raises(ValueError):
        decay_kappa(-1)


def test_reward_B():
    f = RewardFactors(t=1.0, c=1.0, n_update=0, alpha_B=1, beta_B=1, gamma_B=0, nu=1, nu_min=0.2)
    assert reward_B(f) == pytest.approx(2 * math.log2(6.8), abs=1e-12)
    f_half = RewardFactors(**{**f.__dict__, "t": 0.5, "beta_B": 0})
    f_one = RewardFactors(**{**f.__dict__, "beta_B": 0})
    assert reward_B(f_half) == 2 * reward_B(f_one)
    pen = RewardFactors(t=1.0, c=1.0, n_update=3, alpha_B=0, beta_B=0, gamma_B=1)
    assert reward_B(pen) == -3
    assert reward_B(RewardFactors(n_update=2, gamma_B=0.5)) == -1.0


def test_reward_K():
    assert reward_K(RewardFactors(t=1, c=1, path_len=10, alpha_K=0, beta_K=0, gamma_K=-0.1)) == pytest.approx(-1.0)
    assert reward_K(RewardFactors(t=0.5, c=1, path_len=2, alpha_K=1, beta_K=0, gamma_K=0)) == 2.0
    short = RewardFactors(t=0.2, c=1.3, path_len=4)
    long = RewardFactors(t=0.2, c=1.3, path_len=9)
    assert reward_K(short) > reward_K(long)
    assert reward_K(RewardFactors()) == 0.0


def fill(buf, n, rng):
    for _ in range(n):
        buf.add(Transition(rng.random(9) + 0.01, rng.random(3), 50.0, rng.standard_normal(),
                           rng.random(9) + 0.01, False))


def test_per_uniform_with_equal_priorities():
    rng = make_rng(0)
    buf = ReplayBuffer(capacity=50)
    fill(buf, 50, rng)
    draws = [per_sample(buf, 50, rng) for _ in range(2000)]   # 10^5 indices
    idx = np.concatenate([d[0] for d in draws])
    w = np.concatenate([d[1] for d in draws])
    counts = np.bincount(idx, minlength=50)
    assert chisquare(counts).pvalue > 0.01
    expected = 100_000 / 50
    assert np.all(np.abs(counts - expected) < 3 * np.sqrt(expected) * 1.5)
    assert np.allclose(w, 1.0)


def test_per_alpha_zero_and_dominant_priority():
    rng = make_rng(1)
    buf = ReplayBuffer(capacity=20, alpha=0.0)
    fill(buf, 20, rng)
    buf.update_priorities(np.arange(20), rng.random(20) * 100)
    assert np.array_equal(buf.probabilities(), np.full(20, 1 / 20))
    buf = ReplayBuffer(capacity=20, alpha=1.0)
    fill(buf, 20, rng)
    p = np.full(20, 1e-3)
    p[7] = 1e3
    buf.priorities[:20] = p
    idx = np.concatenate([per_sample(buf, 20, rng)[0] for _ in range(500)])
    assert np.mean(idx == 7) >= 0.99
    with pytest.raises(ValueError):
        per_sample(ReplayBuffer(10), 5, rng)


def test_buffer_ring_and_max_priority():
    rng = make_rng(2)
    buf = ReplayBuffer(capacity=8)
    fill(buf, 5, rng)
    buf.update_priorities([0, 1], [4.0, -9.0])
    assert buf.max_priority == pytest.approx(9.0 + 1e-6)
    fill(buf, 10, rng)
    assert len(buf) == 8 and np.all(buf.priorities[:8] > 0)


def small_batch(rng, m=8):
    return {"s": rng.random((m, 9)) + 0.01, "a": rng.random((m, 3)), "z": rng.uniform(3, 15, m),
            "r": rng.standard_normal(m), "s_next": rng.random((m, 9)) + 0.01,
            "done": rng.random(m) < 0.3}


def test_critic_target_conventions():
    rng = make_rng(3)
    tr = Trainer(TrainerConfig(head="K", gamma=0.0))
    batch = small_batch(rng)
    assert np.array_equal(tr.target_values(batch), batch["r"])
    tr2 = Trainer(TrainerConfig(head="K", gamma=0.9))
    batch["done"][:] = True
    assert np.array_equal(tr2.target_values(batch), batch["r"])


def test_critic_fixed_point_zero_loss():
    rng = make_rng(4)
    tr = Trainer(TrainerConfig(head="K", gamma=0.0))
    tr.critic = zero_network("critic")
    from litstar.neuralnet import OptimizerState
    tr.critic_opt = OptimizerState.for_network(tr.critic)
    batch = small_batch(rng)
    batch["r"][:] = 0.0
    loss, grads, td = critic_loss_and_grads(tr, batch)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.arrays())


def test_critic_update_reduces_loss_and_sets_priorities():
    rng = make_rng(5)
    tr = Trainer(TrainerConfig(head="B", batch_size=16))
    fill(tr.buffer, 32, rng)
    idx = np.arange(16)
    batch = tr.buffer.batch(idx)
    first = critic_update(tr, batch, idx, np.ones(16))
    for _ in range(30):
        last = critic_update(tr, batch, idx, np.ones(16))
    assert last < first
    assert np.all(tr.buffer.priorities[:16] > 0)


def test_actor_gradient_linear_critic():
    # With Q = (z - lo) / (hi - lo) the actor gradient is -mean dz/dtheta / (hi - lo);
    # compare against finite differences of the composed map.
    rng = make_rng(6)
    tr = Trainer(TrainerConfig(head="B"))
    s = rng.random((5, 9)) + 0.01
    loss, grads = _actor_loss_with_linear_critic(tr, s)
    layer = tr.actor.layers[-1]
    for i, j in [(0, 0), (1, 5), (2, 31)]:
        old = layer.weight[i, j]
        layer.weight[i, j] = old + 1e-6
        plus = _linear_objective(tr, s)
        layer.weight[i, j] = old - 1e-6
        minus = _linear_objective(tr, s)
        layer.weight[i, j] = old
        fd = (plus - minus) / 2e-6
        assert grads.layers[-1][0][i, j] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def _linear_objective(tr, s):
    lo, hi = tr.z_range
    w, _ = forward(tr.actor, s)
    return -float(np.mean((tsk_value(w, tr.consequents.f) - lo) / (hi - lo)))


def _actor_loss_with_linear_critic(tr, s):
    """Swap in a critic whose output equals its last input (z normalised)."""
    critic = zero_network("critic")
    # route input 9 through the trunk: conv k=3 centre tap on the last position keeps z
    critic.layers[0].weight[0, 1] = 1.0      # channel 0 of conv3 copies x at each position
    # the flattened feature for channel 0, position 9 sits at index 9
    critic.layers[3].weight[0, 9] = 1.0
    for k in range(4, 8):
        critic.layers[k].weight[0, 0] = 1.0
    critic.layers[8].weight[0, 0] = 1.0
    tr.critic = critic
    x = np.concatenate([s, np.full((len(s), 1), 0.37)], axis=1)
    assert forward(critic, x)[0][:, 0] == pytest.approx(np.full(len(s), 0.37))
    loss, grads = actor_loss_and_grads(tr, {"s": s})
    assert loss == pytest.approx(_linear_objective(tr, s))
    return loss, grads


def test_actor_constant_critic_zero_gradient():
    tr = Trainer(TrainerConfig(head="K"))
    tr.critic = zero_network("critic")
    tr.critic.layers[-1].bias[:] = 2.5
    loss, grads = actor_loss_and_grads(tr, {"s": make_rng(7).random((4, 9)) + 0.01})
    assert loss == -2.5
    assert all(np.all(g == 0) for g in grads.arrays())


def factory(ep, rng):
    return make_random_rectangles(2, count=3, seed=ep)


def test_train_no_updates_returns_initial_actor():
    cfg = TrainerConfig(head="B", episodes=1, episode_budget=0.02, seed=3)
    tr = train(factory, "B", cfg)
    init = Trainer(cfg).actor
    assert tr.updates == 0
    assert all(np.array_equal(a, b) for a, b in zip(tr.actor.arrays(), init.arrays()))


def test_train_deterministic_and_invariants(tmp_path):
    cfg = TrainerConfig(head="K", episodes=3, episode_budget=0.02, batch_size=16, update_start=16, seed=1)
    a = train(factory, "K", cfg, log_path=tmp_path / "a.csv")
    b = train(factory, "K", cfg, log_path=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.updates > 0
    assert all(np.array_equal(x, y) for x, y in zip(a.actor.arrays(), b.actor.arrays()))
    assert len(a.buffer) <= a.buffer.capacity
    assert np.all(a.buffer.priorities[:len(a.buffer)] > 0)
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "episode,step,rho_global,rho_local,lambda_norm,action_z,reward,critic_loss,actor_loss"


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(gamma=1.5)
    with pytest.raises(ValueError):
        TrainerConfig(head="X")
    with pytest.raises(ValueError):
        train(factory, "B", TrainerConfig(head="K"))
