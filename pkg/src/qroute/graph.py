"""Hardware interaction graphs, swap layers and matching enumeration."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

__all__ = [
    "InteractionGraph",
    "SwapLayer",
    "GraphFormatError",
    "grid",
    "from_edges",
    "all_pairs_distances",
    "enumerate_matchings",
    "count_matchings",
    "read_graph",
    "write_graph",
    "parse_grid_spec",
]


class GraphFormatError(ValueError):
    """Raised for malformed graph files or grid specifications."""


def all_pairs_distances(vertex_count: int, edges: Sequence[tuple[int, int]]) -> np.ndarray:
    """Return the hop-count distance matrix of an undirected graph.

    Raises ``ValueError`` naming an unreachable pair when the graph is
    disconnected.
    """
    n = int(vertex_count)
    if not edges:
        if n == 1:
            return np.zeros((1, 1), dtype=np.int64)
        raise ValueError(f"graph is disconnected: vertices 0 and 1 are unreachable")
    rows = [u for u, v in edges] + [v for u, v in edges]
    cols = [v for u, v in edges] + [u for u, v in edges]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    dist = shortest_path(adj, method="D", directed=False, unweighted=True)
    bad = np.argwhere(~np.isfinite(dist))
    if len(bad):
        u, v = bad[0]
        raise ValueError(f"graph is disconnected: vertices {u} and {v} are unreachable")
    return dist.astype(np.int64)


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected, connected hardware connectivity graph.

    Vertices are ``0 .. vertex_count - 1`` and each hosts exactly one qubit.
    Edges are stored as sorted ``(u, v)`` pairs with ``u < v`` in
    lexicographic order; an edge's position in :attr:`edges` is its action
    index.
    """

    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    shape: tuple[int, int] | None = None
    distance_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.vertex_count)
        if n < 1:
            raise ValueError("vertex_count must be positive")
        cleaned = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for {n} vertices")
            cleaned.add((min(u, v), max(u, v)))
        edges = tuple(sorted(cleaned))
        object.__setattr__(self, "vertex_count", n)
        object.__setattr__(self, "edges", edges)
        dist = all_pairs_distances(n, edges)
        dist.setflags(write=False)
        object.__setattr__(self, "distance_table", dist)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    @property
    def is_grid(self) -> bool:
        return self.shape is not None

    def distance(self, u: int, v: int) -> int:
        return int(self.distance_table[u, v])

    def neighbors(self, v: int) -> list[int]:
        return [int(w) for w in np.flatnonzero(self.distance_table[v] == 1)]

    def edge_index(self, u: int, v: int) -> int:
        return self.edges.index((min(u, v), max(u, v)))

    def __hash__(self):
        return hash((self.vertex_count, self.edges, self.shape))

    def __repr__(self):
        if self.shape is not None:
            return f"InteractionGraph(grid {self.shape[0]}x{self.shape[1]})"
        return f"InteractionGraph(vertex_count={self.vertex_count}, edges={len(self.edges)})"


def grid(rows: int, cols: int) -> InteractionGraph:
    """Return the ``rows x cols`` grid graph with row-major vertex numbering."""
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    if rows * cols < 2:
        raise ValueError("a grid needs at least two vertices")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return InteractionGraph(rows * cols, tuple(edges), shape=(rows, cols))


def from_edges(vertex_count: int, edges: Iterable[tuple[int, int]]) -> InteractionGraph:
    return InteractionGraph(vertex_count, tuple(tuple(e) for e in edges))


def parse_grid_spec(text: str) -> InteractionGraph:
    """Parse ``"RxC"`` (e.g. ``"4x4"``) into a grid graph."""
    try:
        r, c = text.lower().split("x")
        return grid(int(r), int(c))
    except ValueError as exc:
        raise GraphFormatError(f"invalid grid spec {text!r}: {exc}") from exc


def read_graph(path: str | Path) -> InteractionGraph:
    """Read the plain-text format: vertex count, then one ``u v`` edge per line."""
    lines = Path(path).read_text().splitlines()
    content = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not content:
        raise GraphFormatError(f"{path}: empty graph file")
    lineno, first = content[0]
    try:
        n = int(first)
    except ValueError:
        raise GraphFormatError(f"{path}:{lineno}: expected vertex count, got {first!r}") from None
    edges = []
    for lineno, ln in content[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected '<u> <v>', got {ln!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer vertex in {ln!r}") from None
    try:
        return from_edges(n, edges)
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from exc


def write_graph(g: InteractionGraph, path: str | Path) -> None:
    lines = [str(g.vertex_count)] + [f"{u} {v}" for u, v in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SwapLayer:
    """A set of vertex-disjoint edges (by index) swapped in one time-step."""

    swaps: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "swaps", tuple(sorted(int(e) for e in self.swaps)))

    def __len__(self):
        return len(self.swaps)

    def __iter__(self):
        return iter(self.swaps)

    def validate(self, g: InteractionGraph) -> None:
        """Raise ``ValueError`` unless this is a matching of ``g``."""
        seen = set()
        if len(set(self.swaps)) != len(self.swaps):
            raise ValueError(f"duplicate edge in swap layer {self.swaps}")
        for e in self.swaps:
            if not 0 <= e < g.edge_count:
                raise ValueError(f"edge index {e} out of range for {g.edge_count} edges")
            u, v = g.edges[e]
            if u in seen or v in seen:
                raise ValueError(f"swap layer {self.swaps} is not a matching: vertex reused by edge {e}")
            seen.update((u, v))

    def is_valid(self, g: InteractionGraph) -> bool:
        try:
            self.validate(g)
        except ValueError:
            return False
        return True

    def vertex_pairs(self, g: InteractionGraph) -> list[tuple[int, int]]:
        return [g.edges[e] for e in self.swaps]


def enumerate_matchings(g: InteractionGraph, include_empty: bool = True) -> list[SwapLayer]:
    """List every matching of ``g`` in lexicographic order of edge indices.

    The output grows exponentially with the edge count; intended for small
    graphs (the 4x4 grid has about ten thousand matchings).
    """
    return list(_iter_matchings(g, include_empty))


def _iter_matchings(g: InteractionGraph, include_empty: bool) -> Iterator[SwapLayer]:
    edges = g.edges
    m = len(edges)

    def extend(start: int, used: int, chosen: list[int]):
        for i in range(start, m):
            u, v = edges[i]
            mask = (1 << u) | (1 << v)
            if used & mask:
                continue
            chosen.append(i)
            yield SwapLayer(tuple(chosen))
            yield from extend(i + 1, used | mask, chosen)
            chosen.pop()

    if include_empty:
        yield SwapLayer(())
    yield from extend(0, 0, [])


def count_matchings(g: InteractionGraph, include_empty: bool = True) -> int:
    """Count matchings of ``g`` by memoized include/exclude recursion over edges."""
    masks = tuple((1 << u) | (1 << v) for u, v in g.edges)
    # live[i]: vertices still touched by edges i.. ; dead vertices are dropped
    # from the memo key so equivalent subproblems share an entry.
    live = [0] * (len(masks) + 1)
    for i in range(len(masks) - 1, -1, -1):
        live[i] = live[i + 1] | masks[i]

    @lru_cache(maxsize=None)
    def count(i: int, used: int) -> int:
        if i == len(masks):
            return 1
        nxt = live[i + 1]
        total = count(i + 1, used & nxt)
        if not used & masks[i]:
            total += count(i + 1, (used | masks[i]) & nxt)
        return total

    total = count(0, 0)
    return total if include_empty else total - 1
