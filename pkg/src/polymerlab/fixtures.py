"""Bundled deterministic fixtures for tests and the CLI."""

from __future__ import annotations

import numpy as np

from .env import Site, WeightField, Window, field_from_values

# weights of the worked 2x2 example: w(0,0)=1, w(1,0)=5, w(0,1)=2, w(1,1)=3;
# the two paths 0 -> (1,1) have energies 6 and 3
HAND_2X2 = np.array([[1.0, 2.0], [5.0, 3.0]])


def hand_grid_field(pad_to: int = 2) -> WeightField:
    """The 2x2 hand grid, optionally zero-padded to a pad_to x pad_to window
    so that constructions needing sites beyond the grid stay defined."""
    if pad_to < 2:
        raise ValueError("pad_to must be >= 2")
    values = np.zeros((pad_to, pad_to))
    values[:2, :2] = HAND_2X2
    return field_from_values(values, Window(Site(0, 0), pad_to, pad_to))
