"""The Tiger problem: two doors, one tiger, and a noisy listen action."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import PomdpModel

TIGER_LEFT, TIGER_RIGHT = 0, 1
LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
HEAR_LEFT, HEAR_RIGHT = 0, 1


@dataclass(frozen=True)
class TigerParams:
    listen_accuracy: float = 0.8
    tiger_penalty: float = -100.0
    gold_reward: float = 10.0
    listen_reward: float = -1.0
    discount: float = 0.95

    def __post_init__(self):
        if not 0.5 < self.listen_accuracy <= 1.0:
            raise ValueError("listen_accuracy must lie in (0.5, 1]")


def tiger_model(p: TigerParams = TigerParams()) -> PomdpModel:
    """Opening a door ends the episode; listening leaves the tiger where it is."""
    T = np.zeros((2, 3, 2))
    for s in (TIGER_LEFT, TIGER_RIGHT):
        T[s, :, s] = 1.0

    O = np.full((3, 2, 2), 0.5)
    acc = p.listen_accuracy
    O[LISTEN] = [[acc, 1 - acc], [1 - acc, acc]]

    R = np.array([
        [p.listen_reward, p.tiger_penalty, p.gold_reward],
        [p.listen_reward, p.gold_reward, p.tiger_penalty],
    ])
    ends = np.zeros((2, 3), dtype=bool)
    ends[:, [OPEN_LEFT, OPEN_RIGHT]] = True

    return PomdpModel(
        transition=T,
        observation=O,
        reward=R,
        discount=p.discount,
        initial=np.array([0.5, 0.5]),
        ends=ends,
        state_names=("tiger-left", "tiger-right"),
        action_names=("listen", "open-left", "open-right"),
        observation_names=("hear-left", "hear-right"),
        name="tiger",
    )
