"""Python access to the tipping library: fixtures, forecasts, regimes and the CLI."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import _tipping
from ._tipping import (
    TippingError,
    basin_pair,
    classify_letters,
    iterate_map,
    replay,
    run_cli,
    tip_forecast,
    toy_tip_steps,
)

__all__ = [
    "Group",
    "StateSet",
    "TippingError",
    "basin_pair",
    "classify_letters",
    "iterate_map",
    "load_hsf",
    "replay",
    "run_cli",
    "save_hsf",
    "tip_forecast",
    "toy_tip_steps",
]


@dataclass
class Group:
    label: str
    phrase: str
    data: np.ndarray  # float32, (layers, tokens, dim)

    @property
    def token_count(self):
        return self.data.shape[1]


@dataclass
class StateSet:
    dim: int
    layer_count: int
    groups: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def load_hsf(path):
    dim, layer_count, meta_json, groups = _tipping.load_hsf(str(path))
    return StateSet(dim, layer_count, [Group(*g) for g in groups], json.loads(meta_json))


def save_hsf(state_set, path):
    groups = [(g.label, g.phrase, np.ascontiguousarray(g.data, dtype=np.float32)) for g in state_set.groups]
    return _tipping.save_hsf(str(path), state_set.dim, state_set.layer_count, json.dumps(state_set.meta), groups)
