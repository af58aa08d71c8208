"""The routing environment: placement, swap layers and implicit gate firing."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .circuit import Circuit
from .graph import InteractionGraph, SwapLayer

__all__ = [
    "SENTINEL",
    "NORMALIZATIONS",
    "RoutingState",
    "StepOutcome",
    "RoutingEnv",
    "TraceWriter",
    "step_cap",
]

SENTINEL = -1
NORMALIZATIONS = {"unit": K.NORM_UNIT, "raw": K.NORM_RAW}


def step_cap(g: InteractionGraph) -> int:
    """Episode step limit: ten sorting-network passes over a grid, else ten times the vertex count."""
    from .policy import sorting_network_depth

    if not g.is_grid:
        return 10 * g.vertex_count
    return 10 * sorting_network_depth(g)


@dataclass(frozen=True, eq=False)
class RoutingState:
    """Qubit placement plus per-qubit progress through its interaction queue.

    Instances are treated as values; :meth:`RoutingEnv.step` never mutates
    its input.
    """

    qubit_at_vertex: np.ndarray
    vertex_of_qubit: np.ndarray
    queue_position: np.ndarray
    target_qubit: np.ndarray = field(repr=False)
    done: bool = False

    def __eq__(self, other):
        if not isinstance(other, RoutingState):
            return NotImplemented
        return (np.array_equal(self.qubit_at_vertex, other.qubit_at_vertex)
                and np.array_equal(self.queue_position, other.queue_position))

    def __hash__(self):
        return hash((self.qubit_at_vertex.tobytes(), self.queue_position.tobytes()))


@dataclass(frozen=True)
class StepOutcome:
    gates_fired: tuple[tuple[int, int], ...]
    reward: float
    done: bool


class RoutingEnv:
    """Swap-layer environment for one circuit on one interaction graph.

    Parameters
    ----------
    graph : InteractionGraph
        Hardware connectivity; one qubit sits on every vertex.
    circuit : Circuit
        Interactions to execute; ``circuit.qubit_count`` must equal the
        number of vertices.
    reward_per_gate : float
        Reward for each interaction that fires.
    cascade : bool
        Keep firing within a step while advancing targets create new
        adjacent mutual pairs.
    normalization : {"unit", "raw"}
        State encoding. ``"unit"`` maps a vertex label ``l`` to
        ``(l + 1) / n`` and the sentinel to 0; ``"raw"`` keeps labels and -1.
    """

    def __init__(self, graph: InteractionGraph, circuit: Circuit, reward_per_gate: float = 1.0,
                 cascade: bool = True, normalization: str = "unit"):
        if circuit.qubit_count != graph.vertex_count:
            raise ValueError(
                f"circuit has {circuit.qubit_count} qubits but graph has {graph.vertex_count} vertices")
        if normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {normalization!r}")
        self.graph = graph
        self.circuit = circuit
        self.reward_per_gate = float(reward_per_gate)
        self.cascade = bool(cascade)
        self.normalization = normalization
        self.norm_mode = NORMALIZATIONS[normalization]

        n = graph.vertex_count
        self.n = n
        self.edges = graph.edge_array
        self.dist = np.ascontiguousarray(graph.distance_table, dtype=np.int64)
        partners = circuit.partner_queues()
        gates = circuit.queues()
        self.qptr = np.zeros(n + 1, dtype=np.int64)
        self.qptr[1:] = np.cumsum([len(p) for p in partners])
        self.qpartner = np.array([b for p in partners for b in p], dtype=np.int64)
        self.qgate = np.array([i for gs in gates for i in gs], dtype=np.int64)
        deg = max(1, max(len(graph.neighbors(v)) for v in range(n)))
        self.incident = np.full((n, deg), -1, dtype=np.int64)
        fill = [0] * n
        for e, (u, v) in enumerate(graph.edges):
            for w in (u, v):
                self.incident[w, fill[w]] = e
                fill[w] += 1
        self._fired = np.empty(max(1, len(circuit)), dtype=np.int64)

    # -- state construction -------------------------------------------------

    def _make_state(self, qv, vq, cursor) -> RoutingState:
        targets = np.array(
            [K.target_of(q, cursor, self.qptr, self.qpartner) for q in range(self.n)], dtype=np.int64)
        for arr in (qv, vq, cursor, targets):
            arr.setflags(write=False)
        return RoutingState(qv, vq, cursor, targets, bool(np.all(targets < 0)))

    def reset(self, placement=None, rng=None) -> tuple[RoutingState, tuple[tuple[int, int], ...]]:
        """Place qubits and fire any pairs that already start adjacent.

        ``placement`` maps vertex -> qubit; when omitted a uniform random
        permutation is drawn from ``rng`` (int seed or Generator). Returns the
        state and the interactions fired at placement time (no reward).
        """
        if placement is None:
            qv = np.random.default_rng(rng).permutation(self.n).astype(np.int64)
        else:
            qv = np.array(placement, dtype=np.int64)
            if qv.shape != (self.n,) or sorted(qv.tolist()) != list(range(self.n)):
                raise ValueError(f"placement must be a permutation of range({self.n})")
        vq = np.empty(self.n, dtype=np.int64)
        vq[qv] = np.arange(self.n)
        cursor = np.zeros(self.n, dtype=np.int64)
        k = K.fire(qv, vq, cursor, self.qptr, self.qpartner, self.qgate, self.dist,
                   self.cascade, self._fired, 0)
        fired = tuple(self.circuit.interactions[i] for i in self._fired[:k])
        return self._make_state(qv, vq, cursor), fired

    def state_from_arrays(self, qubit_at_vertex, queue_position) -> RoutingState:
        qv = np.array(qubit_at_vertex, dtype=np.int64)
        vq = np.empty(self.n, dtype=np.int64)
        vq[qv] = np.arange(self.n)
        return self._make_state(qv, vq, np.array(queue_position, dtype=np.int64))

    # -- transitions ---------------------------------------------------------

    def layer_mask(self, layer: SwapLayer) -> np.ndarray:
        layer.validate(self.graph)
        mask = np.zeros(self.graph.edge_count, dtype=np.bool_)
        mask[list(layer.swaps)] = True
        return mask

    def step(self, state: RoutingState, layer: SwapLayer) -> tuple[RoutingState, StepOutcome]:
        """Apply ``layer``'s swaps simultaneously, then fire adjacent mutual pairs."""
        if not isinstance(layer, SwapLayer):
            layer = SwapLayer(tuple(layer))
        mask = self.layer_mask(layer)
        qv = state.qubit_at_vertex.copy()
        vq = state.vertex_of_qubit.copy()
        cursor = state.queue_position.copy()
        K.apply_swaps(qv, vq, self.edges, mask)
        k = K.fire(qv, vq, cursor, self.qptr, self.qpartner, self.qgate, self.dist,
                   self.cascade, self._fired, 0)
        fired = tuple(self.circuit.interactions[i] for i in self._fired[:k])
        new = self._make_state(qv, vq, cursor)
        return new, StepOutcome(fired, self.reward_per_gate * k, new.done)

    def fired_indices(self, state: RoutingState, layer: SwapLayer) -> list[int]:
        """Interaction indices fired by ``step(state, layer)`` in firing order."""
        mask = self.layer_mask(layer)
        qv = state.qubit_at_vertex.copy()
        vq = state.vertex_of_qubit.copy()
        cursor = state.queue_position.copy()
        K.apply_swaps(qv, vq, self.edges, mask)
        k = K.fire(qv, vq, cursor, self.qptr, self.qpartner, self.qgate, self.dist,
                   self.cascade, self._fired, 0)
        return self._fired[:k].tolist()

    # -- observations --------------------------------------------------------

    def vertex_labels(self, state: RoutingState) -> np.ndarray:
        """Per vertex, the vertex holding its qubit's target, or ``SENTINEL``."""
        labels = np.full(self.n, SENTINEL, dtype=np.int64)
        t = state.target_qubit[state.qubit_at_vertex]
        has = t >= 0
        labels[has] = state.vertex_of_qubit[t[has]]
        return labels

    def encode_state(self, state: RoutingState) -> np.ndarray:
        x = np.empty(self.n, dtype=np.float64)
        K.encode(state.qubit_at_vertex, state.vertex_of_qubit, state.queue_position,
                 self.qptr, self.qpartner, self.norm_mode, x)
        return x

    def forced_swaps(self, state: RoutingState) -> frozenset[int]:
        """Edges forced for mutually-targeting pairs at distance two.

        Conflicting proposals are resolved by keeping lower edge indices.
        """
        mask = np.zeros(self.graph.edge_count, dtype=np.bool_)
        K.forced_swaps(state.qubit_at_vertex, state.vertex_of_qubit, state.queue_position,
                       self.qptr, self.qpartner, self.dist, self.edges, self.incident, mask)
        return frozenset(np.flatnonzero(mask).tolist())

    def mutual_pairs(self, state: RoutingState) -> list[tuple[int, int]]:
        t = state.target_qubit
        return [(a, int(t[a])) for a in range(self.n) if t[a] > a and t[t[a]] == a]


class TraceWriter:
    """Line-delimited JSON episode trace: one record per step."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "w")

    def record(self, episode: int, layer: int, swaps, gates_fired, reward: float) -> None:
        rec = {
            "episode": episode,
            "layer": layer,
            "swaps": [list(map(int, s)) for s in swaps],
            "gates_fired": [list(map(int, p)) for p in gates_fired],
            "reward": reward,
        }
        self._fh.write(json.dumps(rec) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
