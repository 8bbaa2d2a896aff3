"""Grid geometry, direction sets, and scan-path enumeration.

Conventions used throughout the package:

- Images are 2D float64 arrays of shape ``(H, W)``, row-major, origin at the
  top-left. ``x`` is the column index, ``y`` the row index.
- Flow fields are float64 arrays of shape ``(H, W, 2)`` where ``[..., 0]`` is
  the horizontal displacement u (columns) and ``[..., 1]`` the vertical
  displacement v (rows), both in pixels per frame.
- Masks are boolean arrays of shape ``(H, W)``.

A direction ``d = (dx, dy)`` steps one pixel per sample: ``dx`` columns right
and ``dy`` rows down. The four supported directions decompose the grid into
disjoint maximal scan paths (rows, columns, diagonals, antidiagonals); every
pixel belongs to exactly one path per direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SUPPORTED_DIRECTIONS = ((0, 1), (1, 0), (1, 1), (-1, 1))

# Axial/diagonal weights of the four-direction discretization that best
# approximates the isotropic Euclidean boundary length.
ALPHA_AXIAL = math.sqrt(2.0) - 1.0
ALPHA_DIAGONAL = 1.0 - math.sqrt(2.0) / 2.0


class FlowError(Exception):
    """Base error for this package."""


class NumericalError(FlowError):
    """A solver produced non-finite values."""


class FormatError(FlowError):
    """A file does not conform to its expected format."""


@dataclass(frozen=True)
class DirectionSet:
    """Finite-difference directions with their isotropy weights.

    ``directions`` are integer offset vectors ``(dx, dy)`` drawn from the
    supported four-neighborhood; ``weights`` are the positive coefficients
    applied to each direction's jump penalty.
    """

    directions: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.directions) != len(self.weights):
            raise ValueError("directions and weights must have equal length")
        if len(self.directions) < 1:
            raise ValueError("need at least one direction")
        for d in self.directions:
            if d not in SUPPORTED_DIRECTIONS:
                raise ValueError(f"unsupported direction {d}")
        for a in self.weights:
            if not (a > 0 and math.isfinite(a)):
                raise ValueError(f"weights must be positive and finite, got {a}")

    def __len__(self):
        return len(self.directions)


def default_direction_set(k: int = 4) -> DirectionSet:
    """Return the standard direction system with isotropy weights.

    ``k=4`` gives axial plus diagonal directions with weights
    ``sqrt(2)-1`` (axial) and ``1-sqrt(2)/2`` (diagonal); ``k=2`` gives the
    axial-only variant with unit weights (known to produce block artifacts,
    kept for comparison).
    """
    if k == 4:
        return DirectionSet(
            directions=((0, 1), (1, 0), (1, 1), (-1, 1)),
            weights=(ALPHA_AXIAL, ALPHA_AXIAL, ALPHA_DIAGONAL, ALPHA_DIAGONAL),
        )
    if k == 2:
        return DirectionSet(directions=((0, 1), (1, 0)), weights=(1.0, 1.0))
    raise ValueError(f"k must be 2 or 4, got {k}")


@dataclass(frozen=True)
class ScanPath:
    """One maximal 1D pixel sequence along a direction.

    ``pixels`` is the ordered list of ``(x, y)`` grid coordinates; consecutive
    entries differ by exactly the path's direction vector. ``coordinates``
    are the 1D abscissae used by the line solvers, always ``1..len(pixels)``
    (only differences of abscissae matter; restarting at 1 per path changes
    intercepts but not fits, see potts1d).
    """

    pixels: tuple[tuple[int, int], ...]
    coordinates: np.ndarray = field(compare=False)

    def __len__(self):
        return len(self.pixels)


def enumerate_scan_paths(width: int, height: int, direction: tuple[int, int]) -> list[ScanPath]:
    """Decompose a ``width x height`` grid into scan paths along ``direction``.

    The returned paths partition the grid: every pixel occurs in exactly one
    path. Axial paths all have the full row/column length; diagonal paths have
    varying lengths.
    """
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be >= 1")
    if tuple(direction) not in SUPPORTED_DIRECTIONS:
        raise ValueError(f"unsupported direction {direction}")
    dx, dy = direction
    starts: list[tuple[int, int]] = []
    if (dx, dy) == (0, 1):  # columns, top to bottom
        starts = [(x, 0) for x in range(width)]
    elif (dx, dy) == (1, 0):  # rows, left to right
        starts = [(0, y) for y in range(height)]
    elif (dx, dy) == (1, 1):  # diagonals, ordered by x - y
        starts = [(0, y) for y in range(height - 1, 0, -1)]
        starts += [(x, 0) for x in range(width)]
    else:  # (-1, 1): antidiagonals, ordered by x + y
        starts = [(x, 0) for x in range(width)]
        starts += [(width - 1, y) for y in range(1, height)]
    paths = []
    for x0, y0 in starts:
        pix = []
        x, y = x0, y0
        while 0 <= x < width and 0 <= y < height:
            pix.append((x, y))
            x += dx
            y += dy
        coords = np.arange(1, len(pix) + 1, dtype=np.float64)
        paths.append(ScanPath(pixels=tuple(pix), coordinates=coords))
    return paths


@lru_cache(maxsize=64)
def scan_path_arrays(width: int, height: int, direction: tuple[int, int]):
    """Flat-index layout of the scan paths, for vectorized line extraction.

    Returns ``(order, offsets)`` where ``order`` is an int64 array of
    row-major flat pixel indices grouped path by path, and ``offsets`` is an
    int64 array of length ``n_paths + 1`` with the start of each path in
    ``order``. ``flat[order]`` produces all path samples contiguously.
    """
    paths = enumerate_scan_paths(width, height, direction)
    order = np.empty(width * height, dtype=np.int64)
    offsets = np.zeros(len(paths) + 1, dtype=np.int64)
    pos = 0
    for i, p in enumerate(paths):
        for x, y in p.pixels:
            order[pos] = y * width + x
            pos += 1
        offsets[i + 1] = pos
    assert pos == width * height
    order.setflags(write=False)
    offsets.setflags(write=False)
    return order, offsets


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the 2D image contract; returns the array as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2D array with positive dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def validate_flow(flow: np.ndarray, name: str = "flow") -> np.ndarray:
    """Check the (H, W, 2) flow-field contract; returns float64."""
    arr = np.asarray(flow, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"{name} must have shape (H, W, 2)")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def zero_flow(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width, 2), dtype=np.float64)
