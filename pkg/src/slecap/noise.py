"""Dyadic Brownian increments.

Increments are built top-down by bridge subdivision: the level-0 draw is the
total displacement over [0, T]; each level splits every increment in two with
an independent midpoint draw.  Each level reads its own named sub-stream, so a
run that asks for ``levels+1`` sees the *same* Brownian path as a run that
asks for ``levels``, refined.  That is what makes "halve dt" comparisons a
pure discretization test instead of a resampling test.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.random import SeedSequence

from .seeds import stream

#: rows processed per generation chunk; fixed so that sample i draws the same
#: noise regardless of batch size.
CHUNK = 512


def levels_for(total_time: float, dt: float) -> int:
    """Number of dyadic levels whose step best matches the requested dt."""
    if dt <= 0 or total_time <= 0:
        raise ValueError("total_time and dt must be positive")
    return max(1, round(math.log2(total_time / dt)))


def dyadic_increments(ss: SeedSequence, rows: int, levels: int, total_time: float) -> np.ndarray:
    """Brownian increments, shape (rows, 2**levels), over a uniform grid on [0, total_time].

    Row i is a deterministic function of (ss, i, levels) and is
    refinement-consistent across levels.
    """
    dw = stream(ss, "lvl", 0).standard_normal((rows, 1)) * math.sqrt(total_time)
    for lvl in range(levels):
        n = dw.shape[1]
        h = total_time / n
        xi = stream(ss, "lvl", lvl + 1).standard_normal((rows, n)) * math.sqrt(h / 4.0)
        half = 0.5 * dw
        dw = np.stack((half + xi, half - xi), axis=2).reshape(rows, 2 * n)
    return dw


def refine_column(ss: SeedSequence, tag, col: np.ndarray, h: float, depth: int) -> np.ndarray:
    """Split one step's increments ``col`` (rows,) into 2**depth bridge sub-increments."""
    dw = col[:, None].copy()
    for lvl in range(depth):
        n = dw.shape[1]
        sub_h = h / n
        xi = stream(ss, "ref", tag, lvl).standard_normal((dw.shape[0], n)) * math.sqrt(sub_h / 4.0)
        half = 0.5 * dw
        dw = np.stack((half + xi, half - xi), axis=2).reshape(dw.shape[0], 2 * n)
    return dw
