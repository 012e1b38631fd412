"""Regenerate the bundled scenario files in src/dhtsim/scenarios/.

Paths are authored as timed waypoints and expanded into king-move cycles.
Each agent's bad cycle is its good cycle shifted by one cell, so any
observer within range can, with enough readings, tell the two apart; how
many readings it takes depends on sigma.

    python scripts/make_scenarios.py            # rewrite every bundled file
    python scripts/make_scenarios.py --check    # exit 1 if any file is stale
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from dhtsim.adversary import AdversaryPolicy
from dhtsim.io import dump_scenario
from dhtsim.scenario import AgentSpec, ScenarioSpec, TargetSpec
from dhtsim.simulator import validate

OUT = Path(__file__).resolve().parents[1] / "src" / "dhtsim" / "scenarios"


def walk(a, b):
    """King-move cells from a (exclusive) to b (inclusive)."""
    out, (x, y) = [], a
    while (x, y) != tuple(b):
        x += (b[0] > x) - (b[0] < x)
        y += (b[1] > y) - (b[1] < y)
        out.append((x, y))
    return out


def timed(points, period):
    """[(t, cell), ...] starting at t=0 -> a closed cycle of length ``period``.

    Between waypoints the agent walks straight there and then waits.
    """
    pts = list(points) + [(period, points[0][1])]
    out = [pts[0][1]]
    for (ta, a), (tb, b) in zip(pts, pts[1:]):
        leg = walk(a, b)
        if len(leg) > tb - ta:
            raise ValueError(f"{a} -> {b} needs {len(leg)} steps, only {tb - ta} available")
        out += leg + [b] * (tb - ta - len(leg))
    return tuple(out[:period])


def shift(cycle, d):
    return tuple((x + d[0], y + d[1]) for x, y in cycle)


def agents_from(way, offsets, period, bad):
    out = []
    for i in sorted(way):
        good = timed(way[i], period)
        kw = dict(id=i, good_cycle=good, bad_cycle=shift(good, offsets[i]))
        if i in bad:
            kw.update(identity="bad", adversary=bad[i])
        out.append(AgentSpec(**kw))
    return tuple(out)


# --- five agents: hub plus relay rounds ----------------------------------

STATIONS = {
    "C": [(4, 5), (4, 4), (5, 4), (4, 6), (5, 5)],
    "W": [(1, 6), (1, 4), (2, 5)],
    "E": [(8, 6), (8, 4), (7, 5)],
    "N": [(4, 8), (5, 8), (4, 7)],
    "S": [(4, 1), (5, 1), (5, 2)],
}
FIVE_OFFSETS = {0: (1, 0), 1: (0, 1), 2: (-1, 0), 3: (0, -1), 4: (-1, 0)}
FIVE_PERIOD = 32
# Each round splits the team into a pair at one station and a triple at the
# opposite one.  The bad agent 3 is always in the pair, so the triples are
# all-good meetings of size 3: too small for a synchronous fusion but they
# feed the asynchronous accumulators.  Everyone meets at the hub once a period.
FIVE_PAIRS = [(0, 3), (1, 3), (2, 3), (3, 4)]


def five_agent_way(cadence=6):
    way = {i: [(0, STATIONS["C"][i]), (1, STATIONS["C"][i])] for i in range(5)}
    for r, pair in enumerate(FIVE_PAIRS):
        trio_at, pair_at = ("W", "E") if r % 2 == 0 else ("N", "S")
        arrive, leave = cadence * (r + 1), cadence * (r + 1) + 1
        slots = {i: (trio_at, k) for k, i in enumerate(i for i in range(5) if i not in pair)}
        slots.update({i: (pair_at, k) for k, i in enumerate(pair)})
        for i, (st, k) in slots.items():
            way[i] += [(arrive, STATIONS[st][k]), (leave, STATIONS[st][k])]
    for i in range(5):
        way[i].append((FIVE_PERIOD - 2, STATIONS["C"][i]))
    return way


def five_agent(name, adversary, sigma=0.5, horizon=50):
    return ScenarioSpec(name, (10, 10), agents_from(five_agent_way(), FIVE_OFFSETS, FIVE_PERIOD, {3: adversary}),
                        f=1, sigma=sigma, algorithm="adht", rule="min", horizon=horizon)


# --- larger teams: short out-and-back legs from a shared hub -------------

DIRS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)]


def hub_team(n, design_seed, grid, period=10, reach=3):
    """Agents park on a block around the centre, then run a straight leg out and back."""
    rnd = random.Random(design_seed)
    cx, cy = grid[0] // 2 - 1, grid[1] // 2 - 1
    hubs = [(cx + dx, cy + dy) for dy in (0, 1, -1, 2) for dx in (0, 1, -1, 2)][:n]
    way, offsets = {}, {}
    for i, h in enumerate(hubs):
        d = rnd.choice(DIRS)
        far = (min(max(h[0] + d[0] * reach, 1), grid[0] - 2), min(max(h[1] + d[1] * reach, 1), grid[1] - 2))
        way[i] = [(0, h), (2, h), (2 + reach, far), (3 + reach, far)]
        offsets[i] = rnd.choice(DIRS)
    return way, offsets


def noise_team(sigma=2.0):
    way, off = hub_team(6, 1, (10, 10))
    false = (1, 0, 1, 1, 1, 1)
    return ScenarioSpec("noise-6agent", (10, 10),
                        agents_from(way, off, 10, {3: AdversaryPolicy("fixed", false_hypothesis=false)}),
                        f=1, sigma=sigma, algorithm="adht", rule="avg", horizon=200)


def coordinated_team():
    way, off = hub_team(12, 1, (12, 12))
    group = (4, 9)
    false = tuple(0 if k in (0, 1) else 1 for k in range(12))
    pol = AdversaryPolicy("coordinated", false_hypothesis=false, group=group)
    return ScenarioSpec("coordinated-12agent", (12, 12), agents_from(way, off, 10, {b: pol for b in group}),
                        f=2, sigma=1.5, algorithm="adht", rule="min", horizon=500, trace="summary")


# --- one agent watching one passive beacon -------------------------------

def single_agent():
    agent = AgentSpec(0, ((2, 2),), ((2, 2),))
    beacon = TargetSpec("beacon", good_cycle=((3, 3), (3, 4)), bad_cycle=((2, 3), (2, 4)))
    return ScenarioSpec("single-agent", (6, 6), (agent,), f=0, sigma=1.0, algorithm="sdht", rule="min",
                        horizon=100, targets=(beacon,), hypotheses=((1, 0), (1, 1)))


def bundled():
    return [
        five_agent("bundled-5agent", AdversaryPolicy("random")),
        five_agent("bundled-5agent-fixed", AdversaryPolicy("fixed", false_hypothesis=(1, 0, 1, 1, 1))),
        noise_team(),
        coordinated_team(),
        single_agent(),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="only compare against the files on disk")
    args = ap.parse_args(argv)
    stale = []
    for spec in bundled():
        errors = [x for x in validate(spec) if x.level == "ERROR"]
        if errors:
            sys.exit(f"{spec.name}: " + "; ".join(map(str, errors)))
        text = dump_scenario(spec)
        path = OUT / f"{spec.name}.yaml"
        if args.check:
            if not path.is_file() or path.read_text() != text:
                stale.append(path.name)
            continue
        path.write_text(text)
        print(f"wrote {path.relative_to(OUT.parents[2])}")
    if stale:
        sys.exit("stale: " + ", ".join(stale))


if __name__ == "__main__":
    main()
