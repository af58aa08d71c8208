"""Q-learning over state values with double-Q targets, replay and evaluation."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from . import _kernels as K
from .circuit import Circuit, make_family
from .env import RoutingEnv, RoutingState, step_cap
from .graph import InteractionGraph, SwapLayer
from .policy import (AnnealSchedule, RandomPolicy, RLPolicy, SortingNetworkPolicy, anneal_layer,
                     forced_mask, select_action_random, select_action_rl)
from .qnet import QNetwork, TargetNetwork, make_optimizer, sync_target

__all__ = [
    "TrainerConfig",
    "Transition",
    "ReplayBuffer",
    "EvalReport",
    "TrainingDiverged",
    "bellman_target",
    "run_episode",
    "train",
    "evaluate",
    "rollout",
]

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Raised when the loss becomes non-finite; carries a diagnostic dump."""

    def __init__(self, message, dump):
        super().__init__(message)
        self.dump = dump


@dataclass
class TrainerConfig:
    alpha: float = 1.0
    gamma: float = 0.95
    episodes: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.9995
    replay_capacity: int = 50_000
    batch_size: int = 32
    target_sync_period: int = 100
    seed: int = 0
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    hidden: tuple = (32, 32, 32)
    forced_swaps: bool = True
    family: str = "single-layer"
    interaction_count: int = 16
    normalization: str = "unit"
    cascade: bool = True
    reward_per_gate: float = 1.0
    # clip values to [0, reward still available] when selecting and in targets
    value_bound: bool = True
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    # cheaper search used for the max inside replay targets
    target_anneal: AnnealSchedule = field(
        default_factory=lambda: AnnealSchedule(iterations=150, restarts=0))

    def __post_init__(self):
        if isinstance(self.anneal, dict):
            self.anneal = AnnealSchedule(**self.anneal)
        if isinstance(self.target_anneal, dict):
            self.target_anneal = AnnealSchedule(**self.target_anneal)
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        for name in ("epsilon_start", "epsilon_end", "epsilon_decay"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("replay_capacity", "batch_size", "target_sync_period"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Transition:
    state_vector: np.ndarray
    layer: SwapLayer
    reward: float
    next_vector: np.ndarray
    done: bool
    # raw successor state and its environment, needed to search from it
    next_state: RoutingState = field(repr=False, default=None)
    env: RoutingEnv = field(repr=False, default=None)


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def push(self, t: Transition) -> None:
        self._items.append(t)

    def sample(self, batch_size: int, rng) -> list[Transition]:
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _successor(t: Transition, online: QNetwork, target: TargetNetwork, schedule: AnnealSchedule,
               gamma: float, forced: bool, seed: int, bound: bool = True) -> tuple[float, float]:
    """Reward and target-network value of the layer the online network picks after ``t``.

    The value is zero when that layer finishes the circuit.
    """
    env, s = t.env, t.next_state
    fmask = forced_mask(env, s) if forced else np.zeros(env.graph.edge_count, dtype=np.bool_)
    mask, _, _ = anneal_layer(env, s, online.params, online.dims_array, schedule, fmask, seed, gamma, bound)
    qv = s.qubit_at_vertex.copy()
    vq = s.vertex_of_qubit.copy()
    cur = s.queue_position.copy()
    K.apply_swaps(qv, vq, env.edges, mask)
    k = K.fire(qv, vq, cur, env.qptr, env.qpartner, env.qgate, env.dist, env.cascade, env._fired, 0)
    reward = env.reward_per_gate * k
    remaining = K.remaining_gates(cur, env.qptr)
    if remaining == 0:
        return reward, 0.0
    x = np.empty(env.n)
    K.encode(qv, vq, cur, env.qptr, env.qpartner, env.norm_mode, x)
    value = target.net.kernel_forward(x)
    if bound:
        value = K.clip_value(value, env.reward_per_gate * remaining)
    return reward, float(value)


def bellman_target(t: Transition, online: QNetwork, target: TargetNetwork, cfg: TrainerConfig,
                   schedule: AnnealSchedule | None = None, rng=None,
                   successor: tuple[float, float] | None = None) -> float:
    """Regression target for the value of ``t``'s successor state.

    The value of a state counts rewards still to come, so a finished
    successor has target zero. Otherwise the target is ``r' + gamma * V``
    where ``r'`` is the reward of the layer the online network would play
    next and ``V`` the target network's value of where it leads, clipped
    to the reward still available when ``cfg.value_bound`` is set. With
    ``alpha < 1`` the target is blended with the online prediction,
    ``(1 - alpha) * Q + alpha * y``. ``successor`` supplies ``(r', V)``
    directly and skips the search.
    """
    if t.done:
        y = 0.0
    else:
        if successor is None:
            rng = np.random.default_rng(rng)
            successor = _successor(t, online, target, schedule or cfg.target_anneal, cfg.gamma,
                                   cfg.forced_swaps, int(rng.integers(0, 2**31 - 1)), cfg.value_bound)
        reward, value = successor
        y = reward + cfg.gamma * value
    if cfg.alpha < 1:
        y = (1 - cfg.alpha) * online.forward(t.next_vector) + cfg.alpha * y
    return float(y)


def run_episode(env: RoutingEnv, net: QNetwork | None, cfg: TrainerConfig, rng, epsilon: float = 0.0,
                on_step: Callable[[Transition], None] | None = None, placement=None,
                max_steps: int | None = None):
    """Roll out one episode with epsilon-greedy selection.

    Returns ``(transitions, layer_count, finished)``. Stopping at the step
    cap leaves ``finished`` false; the last transition is not terminal, so
    its successor is still bootstrapped.
    """
    state, _ = env.reset(placement=placement, rng=rng)
    cap = step_cap(env.graph) if max_steps is None else max_steps
    transitions: list[Transition] = []
    x = env.encode_state(state)
    steps = 0
    while not state.done and steps < cap:
        if net is None or rng.random() < epsilon:
            layer = select_action_random(env.graph, rng)
        else:
            layer = select_action_rl(env, state, net, cfg.anneal, cfg.forced_swaps, rng, gamma=cfg.gamma,
                                     bound=cfg.value_bound)
        nxt, out = env.step(state, layer)
        steps += 1
        x_next = env.encode_state(nxt)
        t = Transition(x, layer, out.reward, x_next, out.done, nxt, env)
        transitions.append(t)
        if on_step is not None:
            on_step(t)
        state, x = nxt, x_next
    return transitions, steps, state.done


def train(g: InteractionGraph, cfg: TrainerConfig, circuit_family=None, net: QNetwork | None = None,
          progress: Callable[[dict], None] | None = None):
    """Train a state-value network on circuits drawn from a family.

    ``circuit_family`` is ``sample(rng) -> Circuit``; by default it is built
    from ``cfg.family``. Returns ``(network, curve)`` where ``curve`` is a
    list of per-episode dicts with keys episode, layers, loss, epsilon,
    finished, updates and syncs.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    if circuit_family is None:
        circuit_family = make_family(cfg.family, g.vertex_count, cfg.interaction_count)
    if net is None:
        net = QNetwork((g.vertex_count, *cfg.hidden, 1), seed=rng)
    if net.input_dim != g.vertex_count:
        raise ValueError(f"network input dimension {net.input_dim} does not match {g.vertex_count} vertices")
    net.metadata.update(normalization=cfg.normalization, config=cfg.to_dict(), config_hash=cfg.digest())
    target = TargetNetwork(net)
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)
    net.metadata["optimizer"] = opt.config()
    replay = ReplayBuffer(cfg.replay_capacity)
    curve = []
    epsilon = cfg.epsilon_start
    stats = {"updates": 0, "losses": []}

    def learn(t: Transition):
        replay.push(t)
        if len(replay) < cfg.batch_size:
            return
        batch = replay.sample(cfg.batch_size, rng)
        ys = np.array([bellman_target(b, net, target, cfg, rng=rng) for b in batch])
        xs = np.stack([b.next_vector for b in batch])
        loss = net.loss(xs, ys)
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss at update {stats['updates']}",
                {"update": stats["updates"], "targets": ys.tolist(), "inputs": xs.tolist(),
                 "param_norm": float(np.linalg.norm(net.params))})
        opt.update(net, net.backward(xs, ys))
        stats["updates"] += 1
        stats["losses"].append(loss)
        target.updates_since_sync += 1
        if target.updates_since_sync >= cfg.target_sync_period:
            sync_target(net, target)

    for ep in range(cfg.episodes):
        circuit = circuit_family(rng)
        env = RoutingEnv(g, circuit, cfg.reward_per_gate, cfg.cascade, cfg.normalization)
        stats["losses"] = []
        _, layers, finished = run_episode(env, net, cfg, rng, epsilon, on_step=learn)
        row = {
            "episode": ep,
            "layers": layers,
            "loss": float(np.mean(stats["losses"])) if stats["losses"] else float("nan"),
            "epsilon": epsilon,
            "finished": finished,
            "updates": stats["updates"],
            "syncs": target.sync_count,
        }
        curve.append(row)
        if progress is not None:
            progress(row)
        if ep % 100 == 0:
            log.info("episode %d layers %d loss %.4g eps %.3f syncs %d", ep, layers, row["loss"],
                     epsilon, target.sync_count)
        epsilon = max(cfg.epsilon_end, epsilon * cfg.epsilon_decay)
    net.metadata["episodes_trained"] = cfg.episodes
    return net, curve


# -- evaluation -------------------------------------------------------------------


@dataclass
class EvalReport:
    policy: str
    family: str
    episodes: int
    mean: float
    std: float
    min: int
    max: int
    unfinished: int
    layer_counts: list = field(default_factory=list, repr=False)

    @classmethod
    def from_counts(cls, policy, family, counts, unfinished):
        a = np.asarray(counts, dtype=float)
        if len(a) == 0:
            return cls(policy, family, 0, 0.0, 0.0, 0, 0, unfinished, [])
        return cls(policy, family, len(a), float(a.mean()), float(a.std()), int(a.min()), int(a.max()),
                   unfinished, [int(c) for c in counts])

    def row(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "layer_counts"}

    def summary(self) -> str:
        return (f"{self.policy:>8s} on {self.family}: mean {self.mean:.2f} +/- {self.std:.2f} "
                f"swap layers (min {self.min}, max {self.max}) over {self.episodes} episodes, "
                f"{self.unfinished} unfinished")


def rollout(env: RoutingEnv, policy, rng, placement=None, trace=None, episode: int = 0):
    """Run ``policy`` greedily on ``env``; returns ``(layer_count, finished)``."""
    state, _ = env.reset(placement=placement, rng=rng)
    if isinstance(policy, SortingNetworkPolicy):
        plan = policy.plan(env, state)
        for i, layer in enumerate(plan):
            state, out = env.step(state, layer)
            if trace is not None:
                trace.record(episode, i, layer.vertex_pairs(env.graph), out.gates_fired, out.reward)
        return len(plan), state.done
    cap = step_cap(env.graph)
    steps = 0
    while not state.done and steps < cap:
        layer = policy.act(env, state, rng)
        state, out = env.step(state, layer)
        if trace is not None:
            trace.record(episode, steps, layer.vertex_pairs(env.graph), out.gates_fired, out.reward)
        steps += 1
    return steps, state.done


def evaluation_rng(seed: int, episode: int):
    return np.random.default_rng(np.random.SeedSequence([seed, 1, episode]))


def evaluate(g: InteractionGraph, policy, circuit_family, n_episodes: int, seed: int = 0,
             family_name: str = "custom", threads: int = 1, trace=None, **env_kw) -> EvalReport:
    """Evaluate a policy (no exploration, no learning) on fresh circuits.

    Episode ``i`` draws its circuit, placement and search seeds from
    ``SeedSequence([seed, 1, i])``, so results do not depend on ``threads``.
    """
    if isinstance(circuit_family, str):
        family_name = circuit_family
        circuit_family = make_family(circuit_family, g.vertex_count)

    def one(i):
        rng = evaluation_rng(seed, i)
        circuit = circuit_family(rng)
        env = RoutingEnv(g, circuit, **env_kw)
        return rollout(env, policy, rng, trace=trace, episode=i)

    if threads > 1 and trace is None:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(n_episodes)))
    else:
        results = [one(i) for i in range(n_episodes)]
    counts = [r[0] for r in results]
    unfinished = sum(1 for r in results if not r[1])
    return EvalReport.from_counts(getattr(policy, "name", type(policy).__name__), family_name, counts, unfinished)
