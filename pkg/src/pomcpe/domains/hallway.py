"""The Long Hallway benchmark.

Two copies of the same maze sit side by side.  Each copy has a vertical
corridor, bottom to top::

    c, a, b1..b{k2}, d, g1..g{k1}, h, t

with a side hallway running east from the junction ``d`` through ``e`` to the
dead end ``f``, and two arm rooms ``tw`` and ``te`` west and east of the top
junction ``t``.
In the left copy the west arm holds the star and the east arm the trap; the
right copy swaps them.  Room ``f`` is the only place where the two copies can
be told apart: it emits a left or right signal.  The agent starts in room
``a`` facing north in either copy.

Rooms per copy: 9 fixed plus ``k1 + k2`` corridor rooms.  Movement and
observations are deterministic; a move into a wall leaves the agent in place.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..core import PomdpModel

NORTH, EAST, SOUTH, WEST = range(4)
ORIENTATIONS = "NESW"
DELTAS = {NORTH: (0, 1), EAST: (1, 0), SOUTH: (0, -1), WEST: (-1, 0)}

WAIT, FORWARD, BACKWARD, TURN_LEFT, TURN_RIGHT = range(5)
ACTION_NAMES = ("wait", "forward", "backward", "turn-left", "turn-right")

NO_SIGNAL, LEFT_SIGNAL, RIGHT_SIGNAL = range(3)
SIGNAL_NAMES = ("none", "left", "right")
NUM_OBSERVATIONS = 2 * 2 * 2 * 2 * 3

STEP_REWARD = -1.0
STAR_REWARD = 100.0
TRAP_REWARD = -100.0
DISCOUNT = 0.95

KINDS = ("ordinary", "junction", "signal", "star", "trap")
HALLWAY_NAMES = ("L", "R")
# horizontal distance between the two copies in global coordinates
COPY_OFFSET = 6


class LayoutInvalid(ValueError):
    """A hallway layout failed a structural check."""


@dataclass(frozen=True)
class Room:
    id: str
    hallway: int
    label: str
    x: int
    y: int
    kind: str
    neighbors: tuple[str | None, str | None, str | None, str | None]  # N, E, S, W


@dataclass(frozen=True)
class HallwayLayout:
    k1: int
    k2: int
    rooms: tuple[Room, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {r.id: i for i, r in enumerate(self.rooms)})

    def room(self, room_id: str) -> Room:
        return self.rooms[self.index[room_id]]

    @property
    def num_states(self) -> int:
        return 4 * len(self.rooms)

    def state(self, room_id: str, orientation: int | str) -> int:
        if isinstance(orientation, str):
            orientation = ORIENTATIONS.index(orientation)
        return 4 * self.index[room_id] + orientation

    def decode(self, s: int) -> tuple[str, int]:
        return self.rooms[s // 4].id, s % 4

    def without_room(self, room_id: str) -> "HallwayLayout":
        """Copy with one room removed and dangling doors walled off (fault injection)."""
        rooms = []
        for r in self.rooms:
            if r.id == room_id:
                continue
            nbrs = tuple(None if n == room_id else n for n in r.neighbors)
            rooms.append(Room(r.id, r.hallway, r.label, r.x, r.y, r.kind, nbrs))
        return HallwayLayout(self.k1, self.k2, tuple(rooms))


def room_id(hallway: int, label: str) -> str:
    return f"{HALLWAY_NAMES[hallway]}.{label}"


def build_layout(k1: int, k2: int) -> HallwayLayout:
    if k1 < 0 or k2 < 0:
        raise ValueError("k1 and k2 must be nonnegative")
    cells: list[tuple[int, str, int, int, str]] = []
    for hw in (0, 1):
        ox = hw * COPY_OFFSET
        column = ["c", "a"] + [f"b{i}" for i in range(1, k2 + 1)] + ["d"]
        column += [f"g{j}" for j in range(1, k1 + 1)] + ["h", "t"]
        for y, label in enumerate(column, start=-1):
            kind = "junction" if label in ("d", "t") else "ordinary"
            cells.append((hw, label, ox, y, kind))
        y_d = k2 + 1
        y_t = k2 + k1 + 3
        cells.append((hw, "e", ox + 1, y_d, "ordinary"))
        cells.append((hw, "f", ox + 2, y_d, "signal"))
        west, east = ("star", "trap") if hw == 0 else ("trap", "star")
        cells.append((hw, "tw", ox - 1, y_t, west))
        cells.append((hw, "te", ox + 1, y_t, east))

    at = {(x, y): room_id(hw, label) for hw, label, x, y, _ in cells}
    rooms = []
    for hw, label, x, y, kind in cells:
        nbrs = tuple(at.get((x + dx, y + dy)) for dx, dy in (DELTAS[o] for o in range(4)))
        rooms.append(Room(room_id(hw, label), hw, label, x, y, kind, nbrs))
    return HallwayLayout(k1, k2, tuple(rooms))


def observation_code(wall_front: bool, wall_back: bool, wall_left: bool, wall_right: bool, signal: int) -> int:
    return (((int(wall_front) * 2 + int(wall_back)) * 2 + int(wall_left)) * 2 + int(wall_right)) * 3 + signal


def observation_name(z: int) -> str:
    signal = z % 3
    bits = z // 3
    walls = "".join(flag if bits >> shift & 1 else "-" for flag, shift in zip("FBLR", (3, 2, 1, 0)))
    return f"{walls}/{SIGNAL_NAMES[signal]}"


def _room_observation(room: Room, orientation: int) -> int:
    def wall(direction):
        return room.neighbors[direction % 4] is None

    if room.kind == "signal":
        signal = LEFT_SIGNAL if room.hallway == 0 else RIGHT_SIGNAL
    else:
        signal = NO_SIGNAL
    return observation_code(
        wall(orientation), wall(orientation + 2), wall(orientation + 3), wall(orientation + 1), signal
    )


def _move(layout: HallwayLayout, s: int, a: int) -> tuple[int, float]:
    ri, o = divmod(s, 4)
    room = layout.rooms[ri]
    if a == TURN_LEFT:
        return 4 * ri + (o + 3) % 4, STEP_REWARD
    if a == TURN_RIGHT:
        return 4 * ri + (o + 1) % 4, STEP_REWARD
    if a in (FORWARD, BACKWARD):
        direction = o if a == FORWARD else (o + 2) % 4
        target = room.neighbors[direction]
        if target is None:
            return s, STEP_REWARD
        kind = layout.room(target).kind
        reward = STAR_REWARD if kind == "star" else TRAP_REWARD if kind == "trap" else STEP_REWARD
        return 4 * layout.index[target] + o, reward
    return s, STEP_REWARD


def successor_table(layout: HallwayLayout) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic next-state and reward tables, shape ``(S, 5)``."""
    S = layout.num_states
    nxt = np.zeros((S, 5), dtype=np.int64)
    rew = np.zeros((S, 5))
    for s in range(S):
        for a in range(5):
            nxt[s, a], rew[s, a] = _move(layout, s, a)
    return nxt, rew


def terminal_mask(layout: HallwayLayout) -> np.ndarray:
    return np.repeat([r.kind in ("star", "trap") for r in layout.rooms], 4)


def model_from_layout(layout: HallwayLayout, start: str = "standard") -> PomdpModel:
    S = layout.num_states
    terminal = terminal_mask(layout)
    nxt, rew = successor_table(layout)
    T = np.zeros((S, 5, S))
    R = np.zeros((S, 5))
    for s in range(S):
        for a in range(5):
            if terminal[s]:
                T[s, a, s] = 1.0
            else:
                T[s, a, nxt[s, a]] = 1.0
                R[s, a] = rew[s, a]
    O = np.zeros((5, S, NUM_OBSERVATIONS))
    for s in range(S):
        z = _room_observation(layout.rooms[s // 4], s % 4)
        O[:, s, z] = 1.0

    if start == "standard":
        starts = [layout.state(room_id(hw, "a"), NORTH) for hw in (0, 1)]
    elif start == "modified":
        starts = [layout.state(room_id(hw, "e"), WEST) for hw in (0, 1)]
    else:
        raise ValueError(f"unknown start variant {start!r}")
    initial = np.zeros(S)
    initial[starts] = 1.0 / len(starts)

    return PomdpModel(
        transition=T,
        observation=O,
        reward=R,
        discount=DISCOUNT,
        initial=initial,
        terminal=terminal,
        state_names=tuple(f"{r.id}:{o}" for r in layout.rooms for o in ORIENTATIONS),
        action_names=ACTION_NAMES,
        observation_names=tuple(observation_name(z) for z in range(NUM_OBSERVATIONS)),
        name=f"hallway-k1={layout.k1}-k2={layout.k2}-{start}",
    )


def long_hallway_model(k1: int, k2: int) -> PomdpModel:
    return model_from_layout(build_layout(k1, k2))


def modified_start_model(k1: int, k2: int) -> PomdpModel:
    """Start facing west in room ``e`` of either copy: one backward step reaches ``f``."""
    return model_from_layout(build_layout(k1, k2), start="modified")


# --- analysis ----------------------------------------------------------------

def bfs_distance(layout: HallwayLayout, sources, targets) -> int | None:
    """Fewest actions from any source state to any target state, or ``None``."""
    nxt, _ = successor_table(layout)
    terminal = terminal_mask(layout)
    targets = set(targets)
    dist = {s: 0 for s in sources}
    queue = deque(dist)
    while queue:
        s = queue.popleft()
        if s in targets:
            return dist[s]
        if terminal[s]:
            continue
        for a in range(5):
            s2 = int(nxt[s, a])
            if s2 not in dist:
                dist[s2] = dist[s] + 1
                queue.append(s2)
    return None


def star_states(layout: HallwayLayout, hallway: int) -> list[int]:
    star = next(r for r in layout.rooms if r.hallway == hallway and r.kind == "star")
    return [layout.state(star.id, o) for o in range(4)]


def facing_hallway(layout: HallwayLayout, hallway: int) -> int:
    """State in room ``f`` facing its only open side."""
    f = layout.room(room_id(hallway, "f"))
    open_sides = [o for o in range(4) if f.neighbors[o] is not None]
    if len(open_sides) != 1:
        raise LayoutInvalid(f"{f.id} should be a dead end, has {len(open_sides)} open sides")
    return layout.state(f.id, open_sides[0])


def optimal_episode_length(layout: HallwayLayout, hallway: int = 0, start: str = "standard") -> int:
    """Fewest actions from the start to the star when the route must pass through ``f``."""
    if start == "standard":
        s0 = layout.state(room_id(hallway, "a"), NORTH)
    else:
        s0 = layout.state(room_id(hallway, "e"), WEST)
    f = room_id(hallway, "f")
    best = None
    for o in range(4):
        sf = layout.state(f, o)
        first = bfs_distance(layout, [s0], [sf])
        second = bfs_distance(layout, [sf], star_states(layout, hallway))
        if first is not None and second is not None:
            total = first + second
            best = total if best is None else min(best, total)
    if best is None:
        raise LayoutInvalid("no route from the start through f to the star")
    return best


def scripted_optimal_actions(layout: HallwayLayout, hallway: int, start: str = "standard") -> list[int]:
    """The information-gathering route: visit ``f``, return to the corridor, take the star arm."""
    k1, k2 = layout.k1, layout.k2
    if start == "standard":
        plan = [FORWARD] * (k2 + 1) + [TURN_RIGHT, FORWARD, FORWARD]
        plan += [BACKWARD, BACKWARD, TURN_LEFT]
    else:
        plan = [BACKWARD, FORWARD, FORWARD, TURN_RIGHT]
    plan += [FORWARD] * (k1 + 2)
    plan += [TURN_LEFT if hallway == 0 else TURN_RIGHT, FORWARD]
    return plan


def validate_layout(layout: HallwayLayout) -> dict:
    """Structural self-checks; raises :class:`LayoutInvalid` on the first failure."""
    k1, k2 = layout.k1, layout.k2

    def require(ok, message):
        if not ok:
            raise LayoutInvalid(message)

    expected_rooms = 18 + 2 * k1 + 2 * k2
    require(len(layout.rooms) == expected_rooms, f"expected {expected_rooms} rooms, found {len(layout.rooms)}")
    for r in layout.rooms:
        for o, n in enumerate(r.neighbors):
            if n is None:
                continue
            require(n in layout.index, f"{r.id} points to missing room {n}")
            q = layout.room(n)
            require(q.neighbors[(o + 2) % 4] == r.id, f"door {r.id}->{n} is one-way")
            dx, dy = DELTAS[o]
            require((q.x, q.y) == (r.x + dx, r.y + dy), f"{r.id} and {n} are not adjacent")
    stars = [r for r in layout.rooms if r.kind == "star"]
    traps = [r for r in layout.rooms if r.kind == "trap"]
    require(len(stars) == 2 and len(traps) == 2, "need exactly two star and two trap rooms")
    require({r.hallway for r in stars} == {0, 1}, "each copy needs one star")

    left = {r.label: r for r in layout.rooms if r.hallway == 0}
    right = {r.label: r for r in layout.rooms if r.hallway == 1}
    require(set(left) == set(right), "the two copies have different rooms")
    swap = {"star": "trap", "trap": "star"}
    for label, lr in left.items():
        rr = right[label]
        require((lr.x + COPY_OFFSET, lr.y) == (rr.x, rr.y), f"room {label} is misplaced in the right copy")
        require(swap.get(lr.kind, lr.kind) == rr.kind, f"room {label} differs between copies")
        for o in range(4):
            ln, rn = lr.neighbors[o], rr.neighbors[o]
            require((ln is None) == (rn is None), f"room {label} has different walls in the two copies")
            if ln is not None:
                lq, rq = layout.room(ln), layout.room(rn)
                require(lq.kind == swap.get(rq.kind, rq.kind), f"neighbors of {label} differ between copies")

    model = model_from_layout(layout)
    require(model.num_states == 4 * expected_rooms, "state count mismatch")
    require(model.num_observations == NUM_OBSERVATIONS, "observation count mismatch")
    require(int(model.terminal.sum()) == 16, "expected 8 goal and 8 trap states")

    f_to_star = []
    for hw in (0, 1):
        d = bfs_distance(layout, [facing_hallway(layout, hw)], star_states(layout, hw))
        require(d == 7 + k1, f"copy {HALLWAY_NAMES[hw]}: f to star takes {d} actions, expected {7 + k1}")
        f_to_star.append(d)
    return {
        "k1": k1,
        "k2": k2,
        "rooms": len(layout.rooms),
        "states": model.num_states,
        "observations": model.num_observations,
        "goal_states": 8,
        "trap_states": 8,
        "f_to_star": f_to_star[0],
        "optimal_episode_actions": optimal_episode_length(layout),
    }


# --- text export -------------------------------------------------------------

def render_map(layout: HallwayLayout) -> str:
    xs = [r.x for r in layout.rooms]
    ys = [r.y for r in layout.rooms]
    width = 5
    grid = {(r.x, r.y): r for r in layout.rooms}
    lines = []
    for y in range(max(ys), min(ys) - 1, -1):
        row = []
        for x in range(min(xs), max(xs) + 1):
            r = grid.get((x, y))
            if r is None:
                row.append(" " * width)
            else:
                mark = {"star": "*", "trap": "X"}.get(r.kind, r.label)
                row.append(f"[{mark:^3}]")
        lines.append("".join(row).rstrip())
    return "\n".join(lines)


def dump_layout(layout: HallwayLayout) -> str:
    out = [
        f"# long hallway k1={layout.k1} k2={layout.k2}",
        *(f"# {line}" for line in render_map(layout).splitlines()),
        "# id x y N E S W kind",
    ]
    for r in layout.rooms:
        nbrs = " ".join(n if n is not None else "WALL" for n in r.neighbors)
        out.append(f"{r.id} {r.x} {r.y} {nbrs} {r.kind}")
    return "\n".join(out) + "\n"


def parse_layout(text: str) -> HallwayLayout:
    k1 = k2 = None
    rooms = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "k1=" in line and k1 is None:
                fields = dict(tok.split("=") for tok in line.split() if "=" in tok)
                k1, k2 = int(fields["k1"]), int(fields["k2"])
            continue
        parts = line.split()
        if len(parts) != 8:
            raise LayoutInvalid(f"malformed room line: {line!r}")
        rid, x, y, n, e, s, w, kind = parts
        if kind not in KINDS:
            raise LayoutInvalid(f"unknown room kind {kind!r}")
        hallway = HALLWAY_NAMES.index(rid.split(".")[0])
        nbrs = tuple(None if v == "WALL" else v for v in (n, e, s, w))
        rooms.append(Room(rid, hallway, rid.split(".", 1)[1], int(x), int(y), kind, nbrs))
    if k1 is None:
        raise LayoutInvalid("missing k1/k2 header")
    return HallwayLayout(k1, k2, tuple(rooms))
