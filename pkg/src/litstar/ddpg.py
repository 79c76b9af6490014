"""Fuzzy-DDPG: rewards, prioritized replay, actor-critic updates and the training loop."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fuzzy import HEAD_RANGES, MembershipParams, RuleConsequents, defuzzify_tsk, fuzzify, tsk_gradient, tsk_value
from .neuralnet import (OptimizerState, TrainingDivergedError, backward, forward, init_network,
                        optimizer_step, soft_update)
from .planner import ConstantSource, LITPlanner, PlannerConfig
from .space import make_rng

LOG_FIELDS = ("episode", "step", "rho_global", "rho_local", "lambda_norm", "action_z",
              "reward", "critic_loss", "actor_loss")


# ---------------------------------------------------------------- rewards
def decay_kappa(n_update, nu=1.0, nu_min=0.2):
    """max(nu_min, nu * log2(6.8 - n_update)); nu_min once the log leaves its domain."""
    if n_update < 0:
        raise ValueError("n_update must be non-negative")
    arg = 6.8 - n_update
    if arg <= 0:
        return float(nu_min)
    return float(max(nu_min, nu * math.log2(arg)))


@dataclass
class RewardFactors:
    t: float = None          # seconds spent on the latest solution update; None: no solution
    c: float = None          # latest solution cost
    n_update: int = 0
    path_len: int = 0
    alpha_B: float = 1.0
    beta_B: float = 1.0
    gamma_B: float = 0.05
    alpha_K: float = 1.0
    beta_K: float = 1.0
    gamma_K: float = -0.05   # negative: fewer path states earn more
    nu: float = 1.0
    nu_min: float = 0.2

    @property
    def has_solution(self):
        return self.t is not None and self.c is not None and math.isfinite(self.c)


def reward_B(f):
    if not f.has_solution:
        return -f.gamma_B * f.n_update
    if f.t <= 0 or f.c <= 0:
        raise ValueError("t and c must be positive")
    kappa = decay_kappa(f.n_update, f.nu, f.nu_min)
    return f.alpha_B * kappa / f.t + f.beta_B * kappa / f.c - f.gamma_B * f.n_update


def reward_K(f):
    if not f.has_solution:
        return 0.0
    if f.t <= 0 or f.c <= 0:
        raise ValueError("t and c must be positive")
    return f.alpha_K / f.t + f.beta_K / f.c + f.gamma_K * f.path_len


# ----------------------------------------------------------------- replay
@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    z: float
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Ring buffer with proportional prioritization, P(i) = p_i^alpha / sum_j p_j^alpha."""

    def __init__(self, capacity=100_000, alpha=0.6, beta=0.4, eps=1e-6):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.eps = eps
        self.s = np.zeros((capacity, 9))
        self.a = np.zeros((capacity, 3))
        self.z = np.zeros(capacity)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, 9))
        self.done = np.zeros(capacity, dtype=bool)
        self.priorities = np.zeros(capacity)
        self.max_priority = 1.0
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, tr):
        i = self._next
        self.s[i], self.a[i], self.z[i] = tr.s, tr.a, tr.z
        self.r[i], self.s_next[i], self.done[i] = tr.r, tr.s_next, tr.done
        self.priorities[i] = self.max_priority
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def probabilities(self):
        p = self.priorities[:self.size] ** self.alpha
        return p / p.sum()

    def update_priorities(self, idx, td):
        p = np.abs(np.asarray(td, dtype=np.float64)) + self.eps
        self.priorities[idx] = p
        self.max_priority = max(self.max_priority, float(p.max()))

    def batch(self, idx):
        return {"s": self.s[idx], "a": self.a[idx], "z": self.z[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "done": self.done[idx]}


def per_sample(buf, m, rng):
    """Draw m indices with P(i) and importance weights (N P(i))^-beta / max."""
    if len(buf) < m:
        raise ValueError(f"buffer holds {len(buf)} transitions, need {m}")
    probs = buf.probabilities()
    idx = rng.choice(len(buf), size=m, p=probs)
    w = (len(buf) * probs[idx]) ** (-buf.beta)
    return idx, w / w.max()


# ---------------------------------------------------------------- trainer
@dataclass
class TrainerConfig:
    head: str = "B"
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 64
    episodes: int = 200
    capacity: int = 100_000
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    noise_sigma: float = 0.3
    noise_decay: float = 0.995
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    update_start: int = 64       # updates begin once |D| > update_start
    update_every: int = 4        # gradient step every this many stored transitions
    reward_clip: float = 100.0   # |r| bound; 1/t terms explode when updates are microseconds apart
    episode_budget: float = 0.2
    other_value: float = None    # fixed value of the head not being trained
    seed: int = 0
    rewards: RewardFactors = field(default_factory=RewardFactors)

    def __post_init__(self):
        if self.head not in HEAD_RANGES:
            raise ValueError(f"unknown head {self.head!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1 or self.update_every < 1:
            raise ValueError("batch_size and update_every must be >= 1")
        if isinstance(self.rewards, dict):
            self.rewards = RewardFactors(**self.rewards)


class Trainer:
    """Actor, critic, their targets and optimizers for one head."""

    def __init__(self, config, rng=None, fuzzy_params=None, consequents=None):
        self.config = config
        self.rng = make_rng(config.seed) if rng is None else rng
        self.fuzzy_params = fuzzy_params or MembershipParams.default()
        self.consequents = consequents or RuleConsequents.default(config.head)
        self.actor = init_network("actor", self.rng)
        self.critic = init_network("critic", self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = OptimizerState.for_network(self.actor, lr=config.lr_actor)
        self.critic_opt = OptimizerState.for_network(self.critic, lr=config.lr_critic)
        self.buffer = ReplayBuffer(config.capacity, config.per_alpha, config.per_beta_start)
        self.updates = 0
        self.last_losses = (float("nan"), float("nan"))

    @property
    def z_range(self):
        return self.consequents.value_range

    def _z_input(self, z):
        lo, hi = self.z_range
        return (np.asarray(z, dtype=np.float64) - lo) / (hi - lo)

    def q_values(self, net, s, z):
        x = np.concatenate([np.atleast_2d(s), self._z_input(z).reshape(-1, 1)], axis=1)
        q, cache = forward(net, x)
        return q[:, 0], cache

    def target_values(self, batch):
        w, _ = forward(self.actor_target, batch["s_next"])
        z_next = np.array([defuzzify_tsk(row, self.consequents) for row in w])
        q_next, _ = self.q_values(self.critic_target, batch["s_next"], z_next)
        return batch["r"] + self.config.gamma * (1.0 - batch["done"]) * q_next

    def act(self, s, noise_sigma=0.0):
        """Rule weights, continuous TSK value and crisp output for one fuzzified state."""
        noise = self.rng.normal(0.0, noise_sigma, 3) if noise_sigma > 0 else None
        w, _ = forward(self.actor, s, head_noise=noise)
        return w, float(tsk_value(w, self.consequents.f)), defuzzify_tsk(w, self.consequents)

    def update(self):
        idx, weights = per_sample(self.buffer, self.config.batch_size, self.rng)
        batch = self.buffer.batch(idx)
        closs = critic_update(self, batch, idx, weights)
        aloss = actor_update(self, batch)
        soft_update(self.critic_target, self.critic, self.config.tau)
        soft_update(self.actor_target, self.actor, self.config.tau)
        self.updates += 1
        self.last_losses = (closs, aloss)
        return closs, aloss


def _check_finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise TrainingDivergedError(f"non-finite value in {name}")


def critic_loss_and_grads(trainer, batch, weights=None):
    """Importance-weighted squared TD error, its parameter gradients and the TD errors."""
    m = batch["r"].shape[0]
    if m == 0:
        raise ValueError("empty batch")
    weights = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    y = trainer.target_values(batch)
    q, cache = trainer.q_values(trainer.critic, batch["s"], batch["z"])
    td = y - q
    loss = float(np.mean(weights * td ** 2))
    _check_finite("critic loss", loss, td)
    grads = backward(trainer.critic, cache, (-2.0 * weights * td / m)[:, None])
    return loss, grads, td


def critic_update(trainer, batch, idx=None, weights=None):
    loss, grads, td = critic_loss_and_grads(trainer, batch, weights)
    optimizer_step(trainer.critic_opt, trainer.critic, grads)
    if idx is not None:
        trainer.buffer.update_priorities(idx, td)
    return loss


def actor_loss_and_grads(trainer, batch):
    """L = -mean Q(s, z(A(s))), differentiated through the TSK weighted mean."""
    s = np.atleast_2d(batch["s"])
    m = s.shape[0]
    if m == 0:
        raise ValueError("empty batch")
    w, a_cache = forward(trainer.actor, s)
    f = trainer.consequents.f
    z = tsk_value(w, f)
    q, c_cache = trainer.q_values(trainer.critic, s, z)
    loss = -float(np.mean(q))
    _check_finite("actor loss", loss)
    dq = backward(trainer.critic, c_cache, np.full((m, 1), -1.0 / m)).input[:, 9]
    lo, hi = trainer.z_range
    dz = dq / (hi - lo)
    grads = backward(trainer.actor, a_cache, dz[:, None] * tsk_gradient(w, f))
    return loss, grads


def actor_update(trainer, batch):
    loss, grads = actor_loss_and_grads(trainer, batch)
    optimizer_step(trainer.actor_opt, trainer.actor, grads)
    return loss


# ------------------------------------------------------------- rollouts
class TrainingSource:
    """Planner parameter source that explores, stores transitions and trains."""

    needs_observation = True

    def __init__(self, trainer, episode, noise_sigma, log=None):
        self.trainer = trainer
        self.episode = episode
        self.noise_sigma = noise_sigma
        self.log = log
        self.pending = None
        self.steps = 0
        self.stored = 0

    def _reward(self, planner):
        info = planner.reward_info()
        f = self.trainer.config.rewards
        factors = RewardFactors(**{**f.__dict__, **info})
        r = reward_B(factors) if self.trainer.config.head == "B" else reward_K(factors)
        clip = self.trainer.config.reward_clip
        return float(np.clip(r, -clip, clip))

    def _close(self, planner, s_next, done):
        s, a, z = self.pending
        r = self._reward(planner)
        tr = Transition(s, a, z, r, s_next, done)
        self.trainer.buffer.add(tr)
        self.stored += 1
        cfg = self.trainer.config
        if len(self.trainer.buffer) > max(cfg.update_start, cfg.batch_size - 1) and self.stored % cfg.update_every == 0:
            self.trainer.update()
        return r

    def __call__(self, obs, planner):
        s = fuzzify(obs, self.trainer.fuzzy_params)
        r = float("nan")
        if self.pending is not None:
            r = self._close(planner, s, False)
        w, _, crisp = self.trainer.act(s, self.noise_sigma)
        self.pending = (s, w, crisp)
        self.steps += 1
        if self.log is not None:
            closs, aloss = self.trainer.last_losses
            self.log.append((self.episode, self.steps, obs.rho_global, obs.rho_local,
                             obs.lambda_norm, crisp, r, closs, aloss))
        return crisp

    def finish(self, planner):
        if self.pending is None:
            return
        obs = planner.observation(self.trainer.config.head)
        self._close(planner, fuzzify(obs, self.trainer.fuzzy_params), True)
        self.pending = None


def train(env_factory, head, config=None, planner_config=None, log_path=None):
    """Train one head for ``config.episodes`` planner episodes.

    ``env_factory(episode, rng)`` returns the environment for each episode.
    The other head stays at ``config.other_value`` (default: the fixed value
    in ``planner_config``). Returns the trainer; its ``actor``,
    ``fuzzy_params`` and ``consequents`` are the trained policy.
    """
    config = TrainerConfig(head=head) if config is None else config
    if config.head != head:
        raise ValueError(f"config is for head {config.head}, not {head}")
    trainer = Trainer(config)
    base = planner_config or PlannerConfig()
    pcfg = PlannerConfig(**{**base.__dict__, "mode": "online", "time_budget": config.episode_budget,
                            "max_iterations": None})
    other = config.other_value
    if other is None:
        other = pcfg.fixed_psi if head == "B" else pcfg.fixed_B
    log = []
    sigma = config.noise_sigma
    for ep in range(config.episodes):
        span = max(config.episodes - 1, 1)
        trainer.buffer.beta = config.per_beta_start + (config.per_beta_end - config.per_beta_start) * ep / span
        ep_rng = make_rng(config.seed * 1_000_003 + ep + 1)
        source = TrainingSource(trainer, ep, sigma, log)
        fixed = ConstantSource(other)
        sources = (source, fixed) if head == "B" else (fixed, source)
        try:
            env = env_factory(ep, ep_rng)
            LITPlanner(env, pcfg, ep_rng, *sources).run()
        except TrainingDivergedError:
            raise
        except Exception as exc:  # a failed episode is skipped, not fatal
            log.append((ep, -1, float("nan"), float("nan"), float("nan"), float("nan"),
                        float("nan"), float("nan"), float("nan")))
            trainer.skipped = getattr(trainer, "skipped", []) + [(ep, repr(exc))]
        sigma *= config.noise_decay
    trainer.log = log
    if log_path is not None:
        write_log(log_path, log)
    return trainer


def write_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_FIELDS)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
