"""Grid geometry, periodic state paths and the time-varying neighbor graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

GridPos = tuple[int, int]


def chebyshev(a: GridPos, b: GridPos) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def in_sensing_window(q_i: GridPos, q: GridPos, radius: int) -> bool:
    """True iff q lies in the (2r+1)x(2r+1) square centred on q_i, boundary included."""
    return chebyshev(q_i, q) <= radius


def window_cells(q_i: GridPos, radius: int, grid: tuple[int, int] | None = None) -> tuple[GridPos, ...]:
    """Cells of the sensing window in row-major order (y outer, x inner).

    With ``grid=(width, height)`` the window is clipped to the grid.
    """
    x0, y0 = q_i
    cells = []
    for y in range(y0 - radius, y0 + radius + 1):
        for x in range(x0 - radius, x0 + radius + 1):
            if grid is not None and not (0 <= x < grid[0] and 0 <= y < grid[1]):
                continue
            cells.append((x, y))
    return tuple(cells)


def king_adjacent(a: GridPos, b: GridPos) -> bool:
    """Default motion graph: 8-connected moves plus staying put."""
    return chebyshev(a, b) <= 1


class MotionGraph:
    """Allowed one-step moves. ``edges=None`` means the 8-connected default."""

    def __init__(self, edges: Iterable[tuple[GridPos, GridPos]] | None = None):
        self.edges = None if edges is None else frozenset((tuple(a), tuple(b)) for a, b in edges)

    def allows(self, a: GridPos, b: GridPos) -> bool:
        if self.edges is None:
            return king_adjacent(a, b)
        return a == b or (a, b) in self.edges


@dataclass(frozen=True)
class StatePath:
    """The two periodic cycles an agent may follow.

    ``good_cycle`` is the assigned patrol; ``bad_cycle`` is what the agent
    flies if compromised.  Both repeat indefinitely from t = 0.
    """

    owner: int
    good_cycle: tuple[GridPos, ...]
    bad_cycle: tuple[GridPos, ...]

    def __post_init__(self):
        if not self.good_cycle or not self.bad_cycle:
            raise ValueError(f"agent {self.owner}: both cycles must be non-empty")

    def cycle(self, identity: str) -> tuple[GridPos, ...]:
        if identity == "good":
            return self.good_cycle
        if identity == "bad":
            return self.bad_cycle
        raise ValueError(f"identity must be 'good' or 'bad', got {identity!r}")

    def position_at(self, t: int, identity: str = "good") -> GridPos:
        if t < 0:
            raise ValueError("time must be non-negative")
        cyc = self.cycle(identity)
        return cyc[t % len(cyc)]


def cycle_violations(cycle: Sequence[GridPos], motion: MotionGraph,
                     grid: tuple[int, int]) -> list[str]:
    """Off-grid cells and non-adjacent consecutive pairs, wraparound included."""
    problems = []
    for k, c in enumerate(cycle):
        if not (0 <= c[0] < grid[0] and 0 <= c[1] < grid[1]):
            problems.append(f"cell {k} {c} is off the {grid[0]}x{grid[1]} grid")
    n = len(cycle)
    for k in range(n):
        a, b = cycle[k], cycle[(k + 1) % n]
        if not motion.allows(a, b):
            problems.append(f"step {k}->{(k + 1) % n}: {a} -> {b} is not a legal move")
    return problems


def neighbors_at(i: int, positions: Mapping[int, GridPos],
                 comm_radius: Mapping[int, int] | int) -> frozenset[int]:
    """N_i = {j : q_i lies inside j's communication range}, always containing i.

    A belief flows j -> i only when j's transmission range covers i, so with
    per-agent radii the relation uses the sender's radius.
    """
    qi = positions[i]
    out = {i}
    for j, qj in positions.items():
        r = comm_radius if isinstance(comm_radius, int) else comm_radius[j]
        if chebyshev(qi, qj) <= r:
            out.add(j)
    return frozenset(out)
