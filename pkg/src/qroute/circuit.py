"""Two-qubit interaction circuits, generators and greedy layering."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Circuit",
    "LayeredCircuit",
    "CircuitFormatError",
    "random_circuit",
    "full_single_layer",
    "greedy_layering",
    "read_circuit",
    "write_circuit",
    "make_family",
    "FAMILIES",
]

FAMILIES = ("single-layer", "random")


class CircuitFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Circuit:
    """An ordered sequence of symmetric two-qubit interactions.

    Gate types are not modelled; an interaction is a bookkeeping event that
    happens once its two qubits sit on adjacent vertices.
    """

    qubit_count: int
    interactions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = int(self.qubit_count)
        if n < 1:
            raise ValueError("qubit_count must be positive")
        pairs = []
        for a, b in self.interactions:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"interaction on a single qubit: ({a}, {b})")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"interaction ({a}, {b}) out of range for {n} qubits")
            pairs.append((a, b))
        object.__setattr__(self, "qubit_count", n)
        object.__setattr__(self, "interactions", tuple(pairs))

    def __len__(self):
        return len(self.interactions)

    def queues(self) -> list[list[int]]:
        """Per-qubit list of interaction indices, in program order."""
        out: list[list[int]] = [[] for _ in range(self.qubit_count)]
        for i, (a, b) in enumerate(self.interactions):
            out[a].append(i)
            out[b].append(i)
        return out

    def partner_queues(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.qubit_count)]
        for a, b in self.interactions:
            out[a].append(b)
            out[b].append(a)
        return out


@dataclass(frozen=True)
class LayeredCircuit:
    layers: tuple[frozenset[tuple[int, int]], ...]

    def __len__(self):
        return len(self.layers)

    def flatten(self) -> list[tuple[int, int]]:
        return [pair for layer in self.layers for pair in sorted(layer)]


def random_circuit(qubit_count: int, interaction_count: int, rng_seed=None) -> Circuit:
    """Sample ``interaction_count`` qubit pairs independently and uniformly.

    Repeated pairs are allowed. ``rng_seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    if qubit_count < 2:
        raise ValueError("random circuits need at least two qubits")
    if interaction_count < 0:
        raise ValueError("interaction_count must be non-negative")
    rng = np.random.default_rng(rng_seed)
    a = rng.integers(0, qubit_count, size=interaction_count)
    b = rng.integers(0, qubit_count - 1, size=interaction_count)
    b = b + (b >= a)
    return Circuit(qubit_count, tuple(zip(a.tolist(), b.tolist())))


def full_single_layer(qubit_count: int, rng_seed=None) -> Circuit:
    """A uniformly random perfect pairing of all qubits."""
    if qubit_count < 2 or qubit_count % 2:
        raise ValueError(f"full_single_layer needs an even qubit count >= 2, got {qubit_count}")
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(qubit_count)
    pairs = tuple((int(perm[2 * k]), int(perm[2 * k + 1])) for k in range(qubit_count // 2))
    return Circuit(qubit_count, pairs)


def greedy_layering(c: Circuit, backfill: bool = True) -> LayeredCircuit:
    """Group interactions into qubit-disjoint layers.

    With ``backfill=False`` the scan is strictly sequential: a layer is
    closed at the first interaction that shares a qubit with it. With
    ``backfill=True`` each interaction goes to the earliest layer after the
    layers holding its qubits' previous interactions (as-soon-as-possible
    scheduling), which is the circuit depth.
    """
    layers: list[set[tuple[int, int]]] = []
    if not backfill:
        busy: set[int] = set()
        for a, b in c.interactions:
            if not layers or a in busy or b in busy:
                layers.append(set())
                busy = set()
            layers[-1].add((a, b))
            busy.update((a, b))
    else:
        depth = [0] * c.qubit_count
        for a, b in c.interactions:
            d = max(depth[a], depth[b])
            if d == len(layers):
                layers.append(set())
            layers[d].add((a, b))
            depth[a] = depth[b] = d + 1
    return LayeredCircuit(tuple(frozenset(layer) for layer in layers))


def make_family(name: str, qubit_count: int, interaction_count: int = 16):
    """Return ``sample(rng) -> Circuit`` for a named circuit family."""
    if name == "single-layer":
        return lambda rng: full_single_layer(qubit_count, rng)
    if name == "random":
        return lambda rng: random_circuit(qubit_count, interaction_count, rng)
    raise ValueError(f"unknown circuit family {name!r}; expected one of {FAMILIES}")


def read_circuit(path: str | Path) -> Circuit:
    lines = Path(path).read_text().splitlines()
    content = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not content:
        raise CircuitFormatError(f"{path}: empty circuit file")
    lineno, first = content[0]
    try:
        n = int(first)
    except ValueError:
        raise CircuitFormatError(f"{path}:{lineno}: expected qubit count, got {first!r}") from None
    pairs = []
    for lineno, ln in content[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise CircuitFormatError(f"{path}:{lineno}: expected '<a> <b>', got {ln!r}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise CircuitFormatError(f"{path}:{lineno}: non-integer qubit in {ln!r}") from None
    try:
        return Circuit(n, tuple(pairs))
    except ValueError as exc:
        raise CircuitFormatError(f"{path}: {exc}") from exc


def write_circuit(c: Circuit, path: str | Path) -> None:
    lines = [str(c.qubit_count)] + [f"{a} {b}" for a, b in c.interactions]
    Path(path).write_text("\n".join(lines) + "\n")


def per_qubit_order(pairs: Sequence[tuple[int, int]], qubit_count: int) -> list[list[frozenset]]:
    """Each qubit's sequence of interactions as unordered pairs."""
    out: list[list[frozenset]] = [[] for _ in range(qubit_count)]
    for a, b in pairs:
        out[a].append(frozenset((a, b)))
        out[b].append(frozenset((a, b)))
    return out
