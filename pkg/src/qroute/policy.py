"""Action selection: annealed search over swap matchings, plus baselines."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import _kernels as K
from .circuit import Circuit, greedy_layering
from .env import RoutingEnv, RoutingState
from .graph import InteractionGraph, SwapLayer
from .qnet import QNetwork

__all__ = [
    "AnnealSchedule",
    "select_action_rl",
    "select_action_random",
    "layer_objective",
    "state_value",
    "sorting_network_route",
    "sorting_network_depth",
    "snake_order",
    "RLPolicy",
    "RandomPolicy",
    "SortingNetworkPolicy",
    "SORTNET_VARIANTS",
]

SORTNET_VARIANTS = ("grid", "chain")


@dataclass(frozen=True)
class AnnealSchedule:
    initial_temperature: float = 1.0
    cooling_factor: float = 0.95
    iterations: int = 500
    restarts: int = 2

    def __post_init__(self):
        if not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be positive")
        if not 0 < self.cooling_factor < 1:
            raise ValueError("cooling_factor must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.restarts < 0:
            raise ValueError("restarts must be non-negative")

    def to_dict(self):
        return asdict(self)


DEFAULT_GAMMA = 0.95


def discount_of(net: QNetwork, gamma: float | None = None) -> float:
    """Explicit ``gamma``, else the one the network was trained with."""
    if gamma is not None:
        return float(gamma)
    return float(net.metadata.get("config", {}).get("gamma", DEFAULT_GAMMA))


def value_bound_of(net: QNetwork, bound: bool | None = None) -> bool:
    """Explicit ``bound``, else whether the network was trained with bounded values."""
    if bound is not None:
        return bool(bound)
    return bool(net.metadata.get("config", {}).get("value_bound", True))


def state_value(env: RoutingEnv, state: RoutingState, net: QNetwork, bound: bool = True) -> float:
    """Network value of ``state``; with ``bound`` clipped to the reward still available."""
    if state.done:
        return 0.0
    v = net.forward(env.encode_state(state))
    if bound:
        v = K.clip_value(v, env.reward_per_gate * K.remaining_gates(state.queue_position, env.qptr))
    return float(v)


def layer_objective(env: RoutingEnv, state: RoutingState, net: QNetwork, layer: SwapLayer,
                    gamma: float | None = None, bound: bool | None = None) -> float:
    """Reward of ``layer`` plus the discounted network value of where it leads.

    A finished state has value zero.
    """
    nxt, out = env.step(state, layer)
    return out.reward + discount_of(net, gamma) * state_value(env, nxt, net, value_bound_of(net, bound))


def _seed(rng) -> int:
    return int(rng.integers(0, 2**31 - 1))


def anneal_layer(env: RoutingEnv, state: RoutingState, params: np.ndarray, dims: np.ndarray,
                 schedule: AnnealSchedule, forced_mask: np.ndarray, seed: int, gamma: float = DEFAULT_GAMMA,
                 bound: bool = True):
    """Run the compiled annealer; returns ``(mask, best_value, initial_value)``."""
    return K.anneal(state.qubit_at_vertex, state.vertex_of_qubit, state.queue_position,
                    env.qptr, env.qpartner, env.qgate, env.dist, env.edges, forced_mask,
                    params, dims, env.norm_mode, env.cascade, float(gamma), env.reward_per_gate, bool(bound),
                    schedule.initial_temperature, schedule.cooling_factor,
                    schedule.iterations, schedule.restarts, seed)


def forced_mask(env: RoutingEnv, state: RoutingState) -> np.ndarray:
    mask = np.zeros(env.graph.edge_count, dtype=np.bool_)
    K.forced_swaps(state.qubit_at_vertex, state.vertex_of_qubit, state.queue_position,
                   env.qptr, env.qpartner, env.dist, env.edges, env.incident, mask)
    return mask


def select_action_rl(env: RoutingEnv, state: RoutingState, net: QNetwork, schedule: AnnealSchedule,
                     forced: bool = True, rng=None, return_value: bool = False, gamma: float | None = None,
                     bound: bool | None = None):
    """Pick the swap layer maximizing reward plus discounted successor value.

    The search is simulated annealing over non-empty matchings. With
    ``forced`` the forced swaps of ``state`` are part of every candidate.
    ``gamma`` and ``bound`` default to the network's training settings.
    """
    if net.input_dim != env.n:
        raise ValueError(f"network input dimension {net.input_dim} does not match {env.n} qubits")
    rng = np.random.default_rng(rng)
    fmask = forced_mask(env, state) if forced else np.zeros(env.graph.edge_count, dtype=np.bool_)
    mask, value, _ = anneal_layer(env, state, net.params, net.dims_array, schedule, fmask, _seed(rng),
                                  discount_of(net, gamma), value_bound_of(net, bound))
    layer = SwapLayer(tuple(np.flatnonzero(mask).tolist()))
    return (layer, float(value)) if return_value else layer


def select_action_random(g: InteractionGraph, rng=None) -> SwapLayer:
    """Random matching: scan edges in shuffled order, keep each free edge with probability 1/2."""
    rng = np.random.default_rng(rng)
    order = rng.permutation(g.edge_count)
    coins = rng.random(g.edge_count) < 0.5
    used = set()
    chosen = []
    for e, keep in zip(order.tolist(), coins.tolist()):
        u, v = g.edges[e]
        if keep and u not in used and v not in used:
            chosen.append(e)
            used.update((u, v))
    return SwapLayer(tuple(chosen))


# -- sorting-network baseline ----------------------------------------------------


def _oet_rounds(k: int) -> int:
    return k if k >= 2 else 0


def sorting_network_depth(g: InteractionGraph, variant: str = "grid") -> int:
    """Swap layers the oblivious network spends on one circuit layer."""
    if not g.is_grid:
        raise ValueError("sorting-network routing needs a grid graph")
    rows, cols = g.shape
    if variant == "grid":
        return 2 * _oet_rounds(cols) + _oet_rounds(rows)
    if variant == "chain":
        return _oet_rounds(rows * cols)
    raise ValueError(f"unknown sorting-network variant {variant!r}")


def snake_order(rows: int, cols: int) -> list[int]:
    """Boustrophedon path through a row-major grid; consecutive cells are adjacent."""
    out = []
    for r in range(rows):
        cs = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        out.extend(r * cols + c for c in cs)
    return out


def _destinations(g: InteractionGraph, qv: np.ndarray, pairs) -> np.ndarray:
    """Destination vertex for every qubit so each pair ends on adjacent cells."""
    n = g.vertex_count
    vq = np.empty(n, dtype=np.int64)
    vq[qv] = np.arange(n)
    path = snake_order(*g.shape)
    slots = [(path[2 * k], path[2 * k + 1]) for k in range(n // 2)]
    dest = np.full(n, -1, dtype=np.int64)
    taken = set()
    for k, (a, b) in enumerate(sorted(pairs, key=lambda p: min(vq[p[0]], vq[p[1]]))):
        c0, c1 = slots[k]
        d = g.distance_table
        if d[vq[a], c0] + d[vq[b], c1] <= d[vq[a], c1] + d[vq[b], c0]:
            dest[a], dest[b] = c0, c1
        else:
            dest[a], dest[b] = c1, c0
        taken.update((c0, c1))
    idle = [q for q in range(n) if dest[q] < 0]
    free = [v for v in range(n) if v not in taken]
    for q in idle:
        if vq[q] in free:
            dest[q] = vq[q]
            free.remove(vq[q])
    for q in idle:
        if dest[q] < 0:
            dest[q] = free.pop(0)
    return dest


def _perfect_matching(counts: np.ndarray) -> list[int]:
    """Perfect matching in a regular bipartite multigraph given by ``counts``."""
    size = counts.shape[0]
    match_right = [-1] * size

    def augment(r, seen):
        for d in range(size):
            if counts[r, d] > 0 and not seen[d]:
                seen[d] = True
                if match_right[d] < 0 or augment(match_right[d], seen):
                    match_right[d] = r
                    return True
        return False

    for r in range(size):
        if not augment(r, [False] * size):
            raise RuntimeError("bipartite multigraph has no perfect matching")
    left = [-1] * size
    for d, r in enumerate(match_right):
        left[r] = d
    return left


def _oet_phase(qv, lines, keys, rounds, edge_of):
    """Odd-even transposition on each line of vertices; returns swap layers."""
    layers = []
    for rnd in range(rounds):
        swaps = []
        for line in lines:
            for j in range(rnd % 2, len(line) - 1, 2):
                u, v = line[j], line[j + 1]
                if keys[qv[u]] > keys[qv[v]]:
                    qv[u], qv[v] = qv[v], qv[u]
                    swaps.append(edge_of[(min(u, v), max(u, v))])
        layers.append(SwapLayer(tuple(swaps)))
    return layers


def _route_permutation(g: InteractionGraph, qv: np.ndarray, dest: np.ndarray, variant: str):
    rows, cols = g.shape
    edge_of = {e: i for i, e in enumerate(g.edges)}
    if variant == "chain":
        path = snake_order(rows, cols)
        pos = {v: i for i, v in enumerate(path)}
        keys = np.array([pos[int(dest[q])] for q in range(g.vertex_count)])
        return _oet_phase(qv, [path], keys, _oet_rounds(rows * cols), edge_of)

    row_lines = [[r * cols + c for c in range(cols)] for r in range(rows)]
    col_lines = [[r * cols + c for r in range(rows)] for c in range(cols)]
    dest_row = dest // cols
    dest_col = dest % cols
    # phase 1: choose an intermediate column per qubit so every column holds
    # one qubit bound for each destination row (edge-colour the row multigraph)
    counts = np.zeros((rows, rows), dtype=np.int64)
    members = {}
    for r in range(rows):
        for v in row_lines[r]:
            q = int(qv[v])
            counts[r, dest_row[q]] += 1
            members.setdefault((r, int(dest_row[q])), []).append(q)
    mid_col = np.zeros(g.vertex_count, dtype=np.int64)
    for c in range(cols):
        match = _perfect_matching(counts)
        for r, d in enumerate(match):
            mid_col[members[(r, d)].pop()] = c
            counts[r, d] -= 1
    layers = _oet_phase(qv, row_lines, mid_col, _oet_rounds(cols), edge_of)
    layers += _oet_phase(qv, col_lines, dest_row, _oet_rounds(rows), edge_of)
    layers += _oet_phase(qv, row_lines, dest_col, _oet_rounds(cols), edge_of)
    return layers


def sorting_network_route(state: RoutingState, g: InteractionGraph, c: Circuit,
                          variant: str = "grid") -> list[SwapLayer]:
    """Swap layers that execute the rest of ``c`` with an oblivious sorting network.

    The unexecuted interactions are layered greedily; for each layer whose
    pairs are not already all adjacent, the qubits are permuted so that pair
    ``k`` lands on the ``k``-th adjacent slot of the snake path. ``"grid"``
    routes the permutation in three odd-even transposition phases (rows,
    columns, rows); ``"chain"`` runs odd-even transposition along the snake.
    Every routed layer costs :func:`sorting_network_depth` swap layers.
    """
    if not g.is_grid:
        raise ValueError("sorting-network routing needs a grid graph")
    if variant not in SORTNET_VARIANTS:
        raise ValueError(f"unknown sorting-network variant {variant!r}")
    queues = c.queues()
    done = set()
    for q, cur in enumerate(state.queue_position.tolist()):
        done.update(queues[q][:cur])
    remaining = Circuit(c.qubit_count, tuple(p for i, p in enumerate(c.interactions) if i not in done))
    qv = state.qubit_at_vertex.copy()
    out: list[SwapLayer] = []
    for layer in greedy_layering(remaining).layers:
        vq = np.empty_like(qv)
        vq[qv] = np.arange(len(qv))
        if all(g.distance_table[vq[a], vq[b]] == 1 for a, b in layer):
            continue
        dest = _destinations(g, qv, sorted(layer))
        out.extend(_route_permutation(g, qv, dest, variant))
    return out


# -- policy objects ---------------------------------------------------------------


class RandomPolicy:
    name = "random"

    def act(self, env: RoutingEnv, state: RoutingState, rng) -> SwapLayer:
        return select_action_random(env.graph, rng)


class RLPolicy:
    name = "rl"

    def __init__(self, net: QNetwork, schedule: AnnealSchedule | None = None, forced_swaps: bool = True,
                 gamma: float | None = None, value_bound: bool | None = None):
        self.net = net
        self.schedule = schedule or AnnealSchedule()
        self.forced_swaps = forced_swaps
        self.gamma = discount_of(net, gamma)
        self.value_bound = value_bound_of(net, value_bound)

    def act(self, env: RoutingEnv, state: RoutingState, rng) -> SwapLayer:
        return select_action_rl(env, state, self.net, self.schedule, self.forced_swaps, rng, gamma=self.gamma,
                                bound=self.value_bound)


class SortingNetworkPolicy:
    """Oblivious baseline; plans all layers up front rather than acting per step."""

    name = "sortnet"

    def __init__(self, variant: str = "grid"):
        if variant not in SORTNET_VARIANTS:
            raise ValueError(f"unknown sorting-network variant {variant!r}")
        self.variant = variant

    def plan(self, env: RoutingEnv, state: RoutingState) -> list[SwapLayer]:
        return sorting_network_route(state, env.graph, env.circuit, self.variant)
