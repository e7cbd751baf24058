"""Synthetic binary datasets for benches and end-to-end checks."""

from __future__ import annotations

import numpy as np

from .data import Dataset


def gaussian_blobs(m, dim=2, separation=2.0, seed=0, scale=1.0):
    """Two Gaussian clouds centered +-separation/2 apart along a random direction."""
    rng = np.random.default_rng(seed)
    labels = rng.choice([-1.0, 1.0], size=m)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    feats = rng.normal(scale=scale, size=(m, dim))
    feats += (labels * separation / 2.0)[:, None] * direction[None, :]
    return Dataset.from_arrays(feats, labels)


def separable_2d(m, margin=0.2, seed=0):
    """2-D data in [0,1]^2 separable by a hyperplane through the origin.

    The decision function has no bias term, so +1 points satisfy
    x0 - x1 >= margin and -1 points x1 - x0 >= margin; w = (1, -1) separates
    them with functional margin >= margin.
    """
    if not 0.0 < margin < 1.0:
        raise ValueError("margin must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    labels = rng.choice([-1.0, 1.0], size=m)
    major = rng.uniform(margin, 1.0, size=m)
    minor = rng.uniform(0.0, major - margin)
    feats = np.where(labels[:, None] > 0, np.column_stack([major, minor]), np.column_stack([minor, major]))
    return Dataset.from_arrays(feats, labels)
