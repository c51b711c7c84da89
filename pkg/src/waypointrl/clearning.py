"""Goal-conditioned classifier critics and actor, with their update rules.

The state-action-goal classifier is trained, per batch example, on three
terms: the next state as a positive with weight (1 - gamma), the relabeled
goal as a bootstrapped positive with weight gamma * w (w = clipped target-net
odds at the next state, gradients blocked), and an independently drawn buffer
state as a negative. The state-goal classifier is trained by the same code
path with the action inputs removed. The actor maximizes classifier log-odds
of the commanded goal plus an entropy bonus, via reparameterized sampling
through a tanh-squashed Gaussian.

These loss forms are reconstructions of standard contrastive-critic training;
see README for the exact equations and the knobs that control them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import AdamState, Network, adam_step, backward, forward_cached, init_network
from .errors import UsageError

SQUASH_EPS = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class TrainConfig:
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    state_critic_lr: float = 3e-5
    actor_loss_weight: float = 1.0
    critic_loss_weight: float = 0.5
    tau: float = 0.005
    target_update_period: int = 1
    batch_size: int = 256
    entropy_coef: float = 0.1
    logit_clamp: float = 20.0
    odds_clip: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise UsageError("gamma must be in (0, 1)")
        for name in ("actor_lr", "critic_lr", "state_critic_lr", "tau"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.logaddexp(0.0, x)


def grad_norm(grads) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


class _GoalClassifier:
    """Shared logic for the action-conditioned and state-only classifiers."""

    def __init__(self, net: Network, state_dim: int, action_dim: int,
                 scale: float = 1.0, logit_clamp: float = 20.0):
        self.net = net
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.scale = scale
        self.logit_clamp = logit_clamp

    @property
    def uses_actions(self) -> bool:
        return self.action_dim > 0

    def assemble(self, s, a, g) -> np.ndarray:
        s = np.atleast_2d(s) / self.scale
        g = np.atleast_2d(g) / self.scale
        if self.uses_actions:
            return np.hstack([s, np.atleast_2d(a), g])
        return np.hstack([s, g])

    def logits_cached(self, x):
        out, cache = forward_cached(self.net, x)
        return out[:, 0], cache

    def logits(self, s, a, g) -> np.ndarray:
        z, _ = self.logits_cached(self.assemble(s, a, g))
        return z

    def prob(self, s, a, g) -> np.ndarray:
        """Classifier output, strictly inside (0, 1) via the logit clamp."""
        z = np.clip(self.logits(s, a, g), -self.logit_clamp, self.logit_clamp)
        return sigmoid(z)

    def log_odds_arrays(self, s, a, g) -> np.ndarray:
        return np.clip(self.logits(s, a, g), -self.logit_clamp, self.logit_clamp)

    @property
    def action_columns(self) -> slice:
        return slice(self.state_dim, self.state_dim + self.action_dim)


class Classifier(_GoalClassifier):
    """Logistic classifier over (state, action, goal) triples."""

    def __init__(self, hidden, rng, state_dim=2, action_dim=2, scale=1.0,
                 logit_clamp=20.0, final_scale=0.01):
        sizes = (2 * state_dim + action_dim, *hidden, 1)
        super().__init__(init_network(sizes, rng, final_scale=final_scale),
                         state_dim, action_dim, scale, logit_clamp)

    def log_odds(self, s, a, g) -> np.ndarray:
        return self.log_odds_arrays(s, a, g)


class StateClassifier(_GoalClassifier):
    """Logistic classifier over (state, goal) pairs, used for waypoint scoring."""

    def __init__(self, hidden, rng, state_dim=2, scale=1.0, logit_clamp=20.0,
                 final_scale=0.01):
        sizes = (2 * state_dim, *hidden, 1)
        super().__init__(init_network(sizes, rng, final_scale=final_scale),
                         state_dim, 0, scale, logit_clamp)

    def log_odds(self, s, g) -> np.ndarray:
        return self.log_odds_arrays(s, None, g)


class Policy:
    """Tanh-squashed diagonal Gaussian over displacement actions."""

    def __init__(self, hidden, rng, state_dim=2, action_dim=2, a_max=1.0,
                 scale=1.0, log_std_min=-5.0, log_std_max=2.0, final_scale=0.01):
        sizes = (2 * state_dim, *hidden, 2 * action_dim)
        self.net = init_network(sizes, rng, final_scale=final_scale)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.a_max = a_max
        self.scale = scale
        self.log_std_min = log_std_min
        self.log_std_max = log_std_max

    def assemble(self, s, g) -> np.ndarray:
        return np.hstack([np.atleast_2d(s) / self.scale, np.atleast_2d(g) / self.scale])

    def _heads(self, out):
        mu = out[:, : self.action_dim]
        raw = out[:, self.action_dim :]
        log_std = np.clip(raw, self.log_std_min, self.log_std_max)
        return mu, log_std, raw

    def distribution(self, s, g):
        out, _ = forward_cached(self.net, self.assemble(s, g))
        mu, log_std, _ = self._heads(out)
        return mu, log_std

    def sample_actions(self, s, g, rng: np.random.Generator) -> np.ndarray:
        mu, log_std = self.distribution(s, g)
        xi = rng.standard_normal(mu.shape)
        return self.a_max * np.tanh(mu + np.exp(log_std) * xi)

    def mean_actions(self, s, g) -> np.ndarray:
        mu, _ = self.distribution(s, g)
        return self.a_max * np.tanh(mu)

    def act(self, s, g, rng: np.random.Generator) -> np.ndarray:
        return self.sample_actions(s[None, :], g[None, :], rng)[0]


@dataclass
class Optimizer:
    lr: float
    state: AdamState

    @classmethod
    def for_net(cls, net: Network, lr: float) -> "Optimizer":
        return cls(lr, AdamState.for_params(net.params))

    def apply(self, net: Network, grads):
        params, self.state = adam_step(net.params, grads, self.state, self.lr)
        net.set_params(params)


def soft_update(target: Network, online: Network, tau: float):
    """target <- (1 - tau) * target + tau * online, in place."""
    new = [(1.0 - tau) * t + tau * o for t, o in zip(target.params, online.params)]
    target.set_params(new)


def classifier_loss_and_grads(clf, target_clf, batch, neg_goals, boot_actions, cfg):
    """Cross-entropy loss over the three goal variants and its parameter grads.

    boot_actions are the target-side bootstrap actions for the relabeled goal
    (None for the state-only classifier). Deterministic given its inputs, so
    finite-difference checkable.
    """
    s, a, s1, g = batch.state, batch.action, batch.next_state, batch.goal
    n = len(s)
    gamma = cfg.gamma

    z_boot = target_clf.logits(s1, boot_actions, g)
    odds = np.exp(np.clip(z_boot, -target_clf.logit_clamp, target_clf.logit_clamp))
    w = np.clip(odds, 0.0, cfg.odds_clip)

    x = np.vstack([
        clf.assemble(s, a, s1),
        clf.assemble(s, a, g),
        clf.assemble(s, a, neg_goals),
    ])
    z, cache = clf.logits_cached(x)
    z_pos, z_fut, z_neg = z[:n], z[n : 2 * n], z[2 * n :]

    per_example = (
        (1.0 - gamma) * softplus(-z_pos)
        + gamma * w * softplus(-z_fut)
        + softplus(z_neg)
    )
    loss = float(per_example.mean())

    gy = np.concatenate([
        (1.0 - gamma) * (sigmoid(z_pos) - 1.0),
        gamma * w * (sigmoid(z_fut) - 1.0),
        sigmoid(z_neg),
    ]) / n
    grads, _ = backward(clf.net, cache, gy[:, None])
    return loss, grads


def classifier_update(clf, target_clf, opt: Optimizer, batch, neg_goals, cfg,
                      rng: np.random.Generator, policy=None):
    """One Adam step on a classifier; returns (loss, gradient L2 norm).

    Handles both classifier kinds: the action-conditioned one needs a policy
    to draw bootstrap actions at the next state.
    """
    boot_actions = None
    if clf.uses_actions:
        if policy is None:
            raise UsageError("action-conditioned classifier update needs a policy")
        boot_actions = policy.sample_actions(batch.next_state, batch.goal, rng)
    loss, grads = classifier_loss_and_grads(clf, target_clf, batch, neg_goals,
                                            boot_actions, cfg)
    grads = [g * cfg.critic_loss_weight for g in grads]
    norm = grad_norm(grads)
    opt.apply(clf.net, grads)
    return loss, norm


def actor_loss_and_grads(policy: Policy, classifier, s, g, xi, cfg):
    """Actor loss mean(alpha * log pi - classifier log-odds) and its grads.

    xi is the fixed standard-normal noise of the reparameterized actions,
    passed in so the function is deterministic and finite-difference checkable.
    """
    n = len(s)
    alpha = cfg.entropy_coef
    a_max = policy.a_max

    out, cache = forward_cached(policy.net, policy.assemble(s, g))
    mu, log_std, raw = policy._heads(out)
    std = np.exp(log_std)
    u = mu + std * xi
    t = np.tanh(u)
    a = a_max * t
    den = a_max * (1.0 - t * t) + SQUASH_EPS

    log_pi = (
        -0.5 * (xi * xi) - 0.5 * LOG_2PI - log_std - np.log(den)
    ).sum(axis=1)

    zc = classifier.logits_cached(classifier.assemble(s, a, g))
    z, clf_cache = zc
    clamp = classifier.logit_clamp
    z_used = np.clip(z, -clamp, clamp)
    loss = float((alpha * log_pi - z_used).mean())

    # d loss / d action, through the classifier's input columns.
    gz = np.where(np.abs(z) < clamp, -1.0 / n, 0.0)
    _, gx = backward(classifier.net, clf_cache, gz[:, None])
    g_a = gx[:, classifier.action_columns]

    g_t = g_a * a_max + (alpha / n) * (2.0 * a_max * t / den)
    g_u = g_t * (1.0 - t * t)
    g_mu = g_u
    g_log_std = g_u * (std * xi) - alpha / n
    in_clamp = (raw > policy.log_std_min) & (raw < policy.log_std_max)
    g_log_std = np.where(in_clamp, g_log_std, 0.0)

    g_out = np.hstack([g_mu, g_log_std])
    grads, _ = backward(policy.net, cache, g_out)
    return loss, grads


def actor_update(policy: Policy, classifier, opt: Optimizer, batch, cfg,
                 rng: np.random.Generator):
    """One Adam step on the actor; returns (loss, gradient L2 norm)."""
    xi = rng.standard_normal((len(batch.state), policy.action_dim))
    loss, grads = actor_loss_and_grads(policy, classifier, batch.state, batch.goal,
                                       xi, cfg)
    grads = [g * cfg.actor_loss_weight for g in grads]
    norm = grad_norm(grads)
    opt.apply(policy.net, grads)
    return loss, norm
