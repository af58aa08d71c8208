"""scikit-learn style routers.

Each router takes circuits as ``X`` and predicts the number of swap layers
needed to execute them from a random initial placement::

    router = RLRouter(graph="4x4", episodes=2000).fit()
    router.predict([full_single_layer(16, 0)])
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .circuit import Circuit, make_family
from .env import RoutingEnv
from .graph import InteractionGraph, SwapLayer, parse_grid_spec
from .policy import AnnealSchedule, RandomPolicy, RLPolicy, SortingNetworkPolicy
from .qnet import QNetwork
from .trainer import TrainerConfig, rollout, train

__all__ = ["RLRouter", "RandomRouter", "SortingNetworkRouter", "check_circuits", "check_graph"]


def check_graph(graph) -> InteractionGraph:
    if isinstance(graph, InteractionGraph):
        return graph
    if isinstance(graph, str):
        return parse_grid_spec(graph)
    raise TypeError(f"graph must be an InteractionGraph or an 'RxC' string, got {type(graph).__name__}")


def check_circuits(X, qubit_count: int) -> list[Circuit]:
    """Coerce ``X`` to a list of circuits over ``qubit_count`` qubits.

    Accepts a single :class:`Circuit`, a sequence of circuits, or a sequence
    of pair lists.
    """
    if isinstance(X, Circuit):
        X = [X]
    out = []
    for i, c in enumerate(X):
        if not isinstance(c, Circuit):
            try:
                c = Circuit(qubit_count, tuple(tuple(p) for p in c))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"X[{i}] is not a valid circuit: {exc}") from exc
        if c.qubit_count != qubit_count:
            raise ValueError(f"X[{i}] has {c.qubit_count} qubits, expected {qubit_count}")
        out.append(c)
    return out


class _Router(BaseEstimator):
    def _policy(self):
        raise NotImplementedError

    def _env(self, circuit):
        return RoutingEnv(self.graph_, circuit)

    def predict(self, X) -> np.ndarray:
        """Swap-layer count per circuit (random placement from ``random_state``)."""
        check_is_fitted(self, "graph_")
        circuits = check_circuits(X, self.graph_.vertex_count)
        policy = self._policy()
        out = np.empty(len(circuits), dtype=np.int64)
        for i, c in enumerate(circuits):
            rng = np.random.default_rng(np.random.SeedSequence([self.random_state, 2, i]))
            out[i], _ = rollout(self._env(c), policy, rng)
        return out

    def score(self, X, y=None) -> float:
        """Negative mean swap-layer count (higher is better)."""
        return -float(np.mean(self.predict(X)))

    def route(self, circuit: Circuit, placement=None, rng=None) -> list[SwapLayer]:
        """Swap layers that execute ``circuit`` from ``placement``."""
        check_is_fitted(self, "graph_")
        (circuit,) = check_circuits(circuit, self.graph_.vertex_count)
        env = self._env(circuit)
        rng = np.random.default_rng(self.random_state if rng is None else rng)
        state, _ = env.reset(placement=placement, rng=rng)
        policy = self._policy()
        if isinstance(policy, SortingNetworkPolicy):
            return policy.plan(env, state)
        from .env import step_cap

        layers = []
        while not state.done and len(layers) < step_cap(env.graph):
            layer = policy.act(env, state, rng)
            state, _ = env.step(state, layer)
            layers.append(layer)
        return layers


class RandomRouter(_Router):
    def __init__(self, graph="4x4", random_state=0):
        self.graph = graph
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.graph_ = check_graph(self.graph)
        return self

    def _policy(self):
        return RandomPolicy()


class SortingNetworkRouter(_Router):
    def __init__(self, graph="4x4", variant="grid", random_state=0):
        self.graph = graph
        self.variant = variant
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.graph_ = check_graph(self.graph)
        if not self.graph_.is_grid:
            raise ValueError("SortingNetworkRouter needs a grid graph")
        return self

    def _policy(self):
        return SortingNetworkPolicy(self.variant)


class RLRouter(_Router):
    """Router driven by a learned state-value network and annealed layer search."""

    def __init__(self, graph="4x4", family="single-layer", interaction_count=16, episodes=10_000,
                 gamma=0.95, alpha=1.0, learning_rate=1e-3, hidden=(32, 32, 32), epsilon_start=1.0,
                 epsilon_end=0.05, epsilon_decay=0.9995, replay_capacity=50_000, batch_size=32,
                 target_sync_period=100, forced_swaps=True, anneal_iterations=500,
                 anneal_temperature=1.0, anneal_cooling=0.95, anneal_restarts=2,
                 target_anneal_iterations=150, value_bound=True, random_state=0):
        self.graph = graph
        self.family = family
        self.interaction_count = interaction_count
        self.episodes = episodes
        self.gamma = gamma
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.hidden = hidden
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay = epsilon_decay
        self.replay_capacity = replay_capacity
        self.batch_size = batch_size
        self.target_sync_period = target_sync_period
        self.forced_swaps = forced_swaps
        self.anneal_iterations = anneal_iterations
        self.anneal_temperature = anneal_temperature
        self.anneal_cooling = anneal_cooling
        self.anneal_restarts = anneal_restarts
        self.target_anneal_iterations = target_anneal_iterations
        self.value_bound = value_bound
        self.random_state = random_state

    def _schedule(self):
        return AnnealSchedule(self.anneal_temperature, self.anneal_cooling, self.anneal_iterations,
                              self.anneal_restarts)

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            alpha=self.alpha, gamma=self.gamma, episodes=self.episodes, epsilon_start=self.epsilon_start,
            epsilon_end=self.epsilon_end, epsilon_decay=self.epsilon_decay,
            replay_capacity=self.replay_capacity, batch_size=self.batch_size,
            target_sync_period=self.target_sync_period, seed=self.random_state,
            learning_rate=self.learning_rate, hidden=tuple(self.hidden), forced_swaps=self.forced_swaps,
            family=self.family, interaction_count=self.interaction_count, anneal=self._schedule(),
            target_anneal=AnnealSchedule(self.anneal_temperature, self.anneal_cooling,
                                         self.target_anneal_iterations, 0),
            value_bound=self.value_bound)

    def fit(self, X: Sequence[Circuit] | None = None, y=None):
        """Train on circuits drawn from ``family``, or uniformly from ``X`` when given."""
        self.graph_ = check_graph(self.graph)
        cfg = self.trainer_config()
        family = None
        if X is not None:
            circuits = check_circuits(X, self.graph_.vertex_count)
            if not circuits:
                raise ValueError("X is empty")
            family = lambda rng: circuits[int(rng.integers(len(circuits)))]  # noqa: E731
        else:
            family = make_family(self.family, self.graph_.vertex_count, self.interaction_count)
        self.net_, self.curve_ = train(self.graph_, cfg, family)
        return self

    def _policy(self):
        check_is_fitted(self, "net_")
        return RLPolicy(self.net_, self._schedule(), self.forced_swaps)

    def save(self, path):
        check_is_fitted(self, "net_")
        self.net_.save(path, estimator_params=_jsonable(self.get_params()))

    @classmethod
    def load(cls, path, **overrides) -> "RLRouter":
        net = QNetwork.load(path)
        params = dict(net.metadata.get("estimator_params", {}))
        params.update(overrides)
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        router = cls(**params)
        router.graph_ = check_graph(router.graph)
        if net.input_dim != router.graph_.vertex_count:
            raise ValueError(f"model expects {net.input_dim} qubits but graph has {router.graph_.vertex_count}")
        router.net_ = net
        router.curve_ = []
        return router


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, InteractionGraph):
            if v.shape is None:
                continue
            v = f"{v.shape[0]}x{v.shape[1]}"
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out
