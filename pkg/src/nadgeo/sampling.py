"""Sample-point helpers shared by the verification routines and the CLI."""

from __future__ import annotations

import numpy as np


def random_points(coords, box, count, seed=0):
    """``count`` coordinate dicts drawn uniformly from ``box`` (one [lo, hi]
    pair per coordinate, in ``coords.names`` order)."""
    rng = np.random.default_rng(seed)
    names = coords.names
    if len(box) != len(names):
        raise ValueError(f"box has {len(box)} ranges for {len(names)} coordinates")
    lows = np.array([b[0] for b in box], dtype=float)
    highs = np.array([b[1] for b in box], dtype=float)
    draws = rng.uniform(lows, highs, size=(count, len(names)))
    return [dict(zip(names, row)) for row in draws]


def grid_points(coords, box, per_axis):
    """Uniform lattice of coordinate dicts, ``per_axis`` nodes per axis."""
    names = coords.names
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = [m.ravel() for m in mesh]
    return [dict(zip(names, vals)) for vals in zip(*flat)]


def unit_box(coords, lo=0.1, hi=0.9):
    return [[lo, hi] for _ in coords.names]
