"""Seeded grid pursuit simulator with capability-gated cooperative captures.

Predators with integer-ish capability scores chase prey with hit points on a
square grid. A capture succeeds only when the capabilities of all predators
simultaneously taking the capture action next to a prey sum to at least that
prey's health; a failed coordinated attempt costs the whole team a penalty.
Captured prey respawn at a random empty cell, so the prey count is conserved.
This environment is a step simulator for learning experiments, not a linear
MDP, and none of the closed-form bound calculators accept it.
"""

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

NUM_PP_ACTIONS = 6  # up, left, down, right, no-op, capture
ACTION_UP, ACTION_LEFT, ACTION_DOWN, ACTION_RIGHT, ACTION_NOOP, ACTION_CAPTURE = range(6)
_PP_MOVES = ((-1, 0), (0, -1), (1, 0), (0, 1))

_CELL_EMPTY, _CELL_PREDATOR, _CELL_PREY, _CELL_OFFGRID = range(4)
_FULL_VIEW_MAX_GRID = 5
_WINDOW_RADIUS = 2
_CAP_CODE_RADIX = 512


@dataclass(frozen=True)
class PredatorPreyConfig:
    grid_size: int = 8
    num_predators: int = 4
    num_prey: int = 4
    predator_capabilities: tuple = (1, 1, 1, 1)
    prey_health: tuple = (1, 1, 1, 1)
    penalty: float = 0.0
    capture_reward: float = 1.0
    episode_limit: int = 100
    prey_move_prob: float = 0.7
    capability_observable: bool = False

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if self.num_predators < 1 or self.num_prey < 1:
            raise ValueError("need at least one predator and one prey")
        if len(self.predator_capabilities) != self.num_predators:
            raise ValueError("one capability per predator is required")
        if len(self.prey_health) != self.num_prey:
            raise ValueError("one health value per prey is required")
        if any(c <= 0 for c in self.predator_capabilities):
            raise ValueError("predator capabilities must be positive")
        if any(h <= 0 for h in self.prey_health):
            raise ValueError("prey health must be positive")
        if self.penalty > 0:
            raise ValueError("the failed-capture penalty must be <= 0")
        if not (0.0 <= self.prey_move_prob <= 1.0):
            raise ValueError("prey_move_prob must lie in [0, 1]")
        if self.episode_limit < 1:
            raise ValueError("episode_limit must be at least 1")
        if self.grid_size**2 < self.num_predators + self.num_prey:
            raise ValueError("the grid is too small for all pieces")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PredatorPreyConfig":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("predator prey config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown predator prey config fields: {', '.join(unknown)}")
        return cls(**{key: _nested_tuple(value) for key, value in doc.items()})


def _nested_tuple(value):
    if isinstance(value, list):
        return tuple(_nested_tuple(item) for item in value)
    return value


@dataclass(frozen=True)
class PPObservation:
    """One agent's discretized view, encodable to a stable integer key.

    view is a row-major tuple of cell codes (empty 0, predator 1, prey 2,
    off-grid 3) over the whole grid at small sizes or a radius-2 window
    otherwise. teammate_capabilities is None unless the environment exposes
    them. key() is injective over observations of one environment shape.
    """

    agent_id: int
    num_cells: int
    own_cell: int
    view: tuple
    own_capability: float
    teammate_capabilities: tuple | None

    def key(self) -> int:
        code = 1 if self.teammate_capabilities is not None else 0
        code = code * 16 + self.agent_id
        code = code * (self.num_cells + 1) + self.own_cell
        for cell in self.view:
            code = code * 4 + cell
        code = code * _CAP_CODE_RADIX + _capability_code(self.own_capability)
        if self.teammate_capabilities is not None:
            for cap in self.teammate_capabilities:
                code = code * _CAP_CODE_RADIX + _capability_code(cap)
        return code


def _capability_code(cap: float) -> int:
    code = int(round(float(cap) * 8.0))
    if not (0 <= code < _CAP_CODE_RADIX):
        raise ValueError(f"capability {cap} is outside the encodable range")
    return code


class PredatorPreyEnv:
    """Steppable pursuit environment; all randomness flows from one seed.

    trajectory_log, when given, is a writable text stream that receives one
    JSON line per reset and per step (positions as (row, col) pairs, so a
    logged reset line can pin a fresh environment for replay debugging).
    """

    num_actions = NUM_PP_ACTIONS

    def __init__(self, config: PredatorPreyConfig, seed: int, trajectory_log=None):
        self.config = config
        self._rng = np.random.default_rng(seed)
        self._g = config.grid_size
        self._predators: list = []
        self._prey: list = []
        self._steps = 0
        self._live = False
        self._trajectory_log = trajectory_log

    # ---- public state accessors -------------------------------------------------

    def predator_positions(self) -> tuple:
        return tuple(self._predators)

    def prey_positions(self) -> tuple:
        return tuple(self._prey)

    @property
    def steps_taken(self) -> int:
        return self._steps

    # ---- episode control --------------------------------------------------------

    def reset(self, predator_positions=None, prey_positions=None) -> list:
        """Place every piece (randomly unless pinned) and return observations."""
        g = self._g
        cells = g * g
        total = self.config.num_predators + self.config.num_prey
        if predator_positions is None and prey_positions is None:
            chosen = self._rng.choice(cells, size=total, replace=False)
            flat = [int(c) for c in chosen]
        else:
            if predator_positions is None or prey_positions is None:
                raise ValueError("pin both predator and prey positions or neither")
            flat = [int(r) * g + int(c) for r, c in predator_positions]
            flat += [int(r) * g + int(c) for r, c in prey_positions]
            if len(flat) != total or len(set(flat)) != total:
                raise ValueError("pinned positions must be distinct and cover every piece")
            for cell in flat:
                if not (0 <= cell < cells):
                    raise ValueError("pinned position is off the grid")
        self._predators = flat[: self.config.num_predators]
        self._prey = flat[self.config.num_predators :]
        self._steps = 0
        self._live = True
        self._log(
            {
                "event": "reset",
                "predators": self._cells_rc(self._predators),
                "prey": self._cells_rc(self._prey),
            }
        )
        return self._observations()

    def available_actions(self) -> np.ndarray:
        """Boolean legality mask of shape (num_predators, 6)."""
        self._require_live()
        occupied = set(self._predators) | set(self._prey)
        mask = np.zeros((self.config.num_predators, NUM_PP_ACTIONS), dtype=bool)
        for i, cell in enumerate(self._predators):
            for action in range(4):
                target = self._move_target(cell, action)
                mask[i, action] = target != cell and target not in occupied
            mask[i, ACTION_NOOP] = True
            mask[i, ACTION_CAPTURE] = any(
                self._adjacent(cell, prey_cell) for prey_cell in self._prey
            )
        return mask

    def step(self, joint_action) -> tuple:
        """Advance one step; returns (observations, team reward, done)."""
        self._require_live()
        actions = [int(a) for a in joint_action]
        if len(actions) != self.config.num_predators:
            raise ValueError("one action per predator is required")
        mask = self.available_actions()
        for i, action in enumerate(actions):
            if not (0 <= action < NUM_PP_ACTIONS) or not mask[i, action]:
                raise ValueError(f"agent {i} submitted unavailable action {action}")

        prey_snapshot = list(self._prey)
        capturing = []
        occupied = set(self._predators) | set(self._prey)
        for i, action in enumerate(actions):
            if action < 4:
                target = self._move_target(self._predators[i], action)
                # a legal-at-decision-time move can be blocked by an earlier mover
                if target not in occupied:
                    occupied.discard(self._predators[i])
                    occupied.add(target)
                    self._predators[i] = target
            elif action == ACTION_CAPTURE:
                capturing.append(i)

        reward = 0.0
        captured = []
        for p, prey_cell in enumerate(prey_snapshot):
            attackers = [
                i for i in capturing if self._adjacent(self._predators[i], prey_cell)
            ]
            if not attackers:
                continue
            strength = sum(self.config.predator_capabilities[i] for i in attackers)
            if strength >= self.config.prey_health[p]:
                reward += self.config.capture_reward
                captured.append(p)
            else:
                reward += self.config.penalty

        for p in captured:
            self._prey[p] = self._respawn_cell()

        self._move_prey()
        self._steps += 1
        done = self._steps >= self.config.episode_limit
        self._log(
            {
                "event": "step",
                "t": self._steps,
                "actions": actions,
                "reward": float(reward),
                "captured": captured,
                "predators": self._cells_rc(self._predators),
                "prey": self._cells_rc(self._prey),
                "done": done,
            }
        )
        return self._observations(), reward, done

    # ---- internals ----------------------------------------------------------------

    def _require_live(self):
        if not self._live:
            raise RuntimeError("call reset() before interacting with the environment")

    def _cells_rc(self, cells) -> list:
        return [list(divmod(int(cell), self._g)) for cell in cells]

    def _log(self, record: dict):
        if self._trajectory_log is not None:
            self._trajectory_log.write(json.dumps(record) + "\n")

    def _move_target(self, cell: int, action: int) -> int:
        g = self._g
        r, c = divmod(cell, g)
        dr, dc = _PP_MOVES[action]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < g and 0 <= nc < g):
            return cell
        return nr * g + nc

    def _adjacent(self, cell_a: int, cell_b: int) -> bool:
        g = self._g
        ra, ca = divmod(cell_a, g)
        rb, cb = divmod(cell_b, g)
        return abs(ra - rb) + abs(ca - cb) == 1

    def _respawn_cell(self) -> int:
        cells = self._g * self._g
        occupied = set(self._predators) | set(self._prey)
        empty = [c for c in range(cells) if c not in occupied]
        if not empty:
            raise RuntimeError("no empty cell is available for a respawn")
        return int(empty[self._rng.integers(len(empty))])

    def _move_prey(self):
        for p, cell in enumerate(self._prey):
            if self._rng.random() >= self.config.prey_move_prob:
                continue
            occupied = set(self._predators) | set(self._prey)
            legal = []
            for action in range(4):
                target = self._move_target(cell, action)
                if target != cell and target not in occupied:
                    legal.append(target)
            if legal:
                self._prey[p] = int(legal[self._rng.integers(len(legal))])

    def _observations(self) -> list:
        g = self._g
        grid = np.zeros(g * g, dtype=np.int64)
        for cell in self._predators:
            grid[cell] = _CELL_PREDATOR
        for cell in self._prey:
            grid[cell] = _CELL_PREY
        observations = []
        for i, cell in enumerate(self._predators):
            if g <= _FULL_VIEW_MAX_GRID:
                view = tuple(int(v) for v in grid)
            else:
                view = self._window_view(grid, cell)
            teammates = None
            if self.config.capability_observable:
                teammates = tuple(
                    float(c)
                    for j, c in enumerate(self.config.predator_capabilities)
                    if j != i
                )
            observations.append(
                PPObservation(
                    agent_id=i,
                    num_cells=g * g,
                    own_cell=int(cell),
                    view=view,
                    own_capability=float(self.config.predator_capabilities[i]),
                    teammate_capabilities=teammates,
                )
            )
        return observations

    def _window_view(self, grid: np.ndarray, cell: int) -> tuple:
        g = self._g
        r0, c0 = divmod(cell, g)
        view = []
        for dr in range(-_WINDOW_RADIUS, _WINDOW_RADIUS + 1):
            for dc in range(-_WINDOW_RADIUS, _WINDOW_RADIUS + 1):
                r, c = r0 + dr, c0 + dc
                if 0 <= r < g and 0 <= c < g:
                    view.append(int(grid[r * g + c]))
                else:
                    view.append(_CELL_OFFGRID)
        return tuple(view)


@dataclass(frozen=True)
class PPTask:
    """One pursuit task: a predator team, prey health profile, and penalty."""

    predator_capabilities: tuple
    prey_health: tuple
    penalty: float

    def to_config(
        self,
        grid_size: int = 8,
        capability_observable: bool = False,
        episode_limit: int = 100,
        prey_move_prob: float = 0.7,
    ) -> PredatorPreyConfig:
        return PredatorPreyConfig(
            grid_size=grid_size,
            num_predators=len(self.predator_capabilities),
            num_prey=len(self.prey_health),
            predator_capabilities=self.predator_capabilities,
            prey_health=self.prey_health,
            penalty=self.penalty,
            capability_observable=capability_observable,
            episode_limit=episode_limit,
            prey_move_prob=prey_move_prob,
        )


@dataclass(frozen=True)
class PPTaskSuite:
    """Train/test task split plus the designated generalization-gap pairing."""

    name: str
    train: tuple
    test: tuple
    gap_train_team: tuple
    gap_test_team: tuple
    prey_health: tuple


_PENALTIES = (0.0, -0.008)


def pp_task_suites() -> dict:
    """The two train/test splits used by the generalization experiments."""
    suites = {}

    prey = (2, 2, 2, 3)
    train_teams = ((2, 3, 2, 3), (1, 2, 1, 2))
    test_teams = ((1, 1, 2, 3), (1, 1, 1, 3))
    suites["unseen_team"] = PPTaskSuite(
        name="unseen_team",
        train=tuple(
            PPTask(team, prey, pen) for team in train_teams for pen in _PENALTIES
        ),
        test=tuple(
            PPTask(team, prey, pen) for team in test_teams for pen in _PENALTIES
        ),
        gap_train_team=(1, 2, 1, 2),
        gap_test_team=(1, 1, 1, 3),
        prey_health=prey,
    )

    prey = (1, 2, 3, 4)
    train_teams = ((1, 2, 2, 3), (1, 1, 2, 2), (1, 3, 2, 1))
    test_teams = ((1, 1, 1, 4), (1, 1, 3, 4), (1, 1, 2, 4))
    suites["unseen_team_agent"] = PPTaskSuite(
        name="unseen_team_agent",
        train=tuple(
            PPTask(team, prey, pen) for team in train_teams for pen in _PENALTIES
        ),
        test=tuple(
            PPTask(team, prey, pen) for team in test_teams for pen in _PENALTIES
        ),
        gap_train_team=(1, 3, 2, 1),
        gap_test_team=(1, 1, 1, 4),
        prey_health=prey,
    )
    return suites


def build_predator_prey(
    config: PredatorPreyConfig, seed: int, trajectory_log=None
) -> PredatorPreyEnv:
    """Construct a seeded environment instance."""
    return PredatorPreyEnv(config, seed, trajectory_log=trajectory_log)
