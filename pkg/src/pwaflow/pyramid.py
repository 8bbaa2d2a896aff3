"""Coarse-to-fine estimation: pyramids, warping, linearization, median.

The linearized data term only sees displacements within about a pixel, so
estimation runs over a resolution pyramid: at each level the second frame is
warped by the current flow, the residual is re-linearized about that warp
point, and the splitting solver refines the full flow. A guide-weighted
median filter removes outliers after every warp. Flow carried to the next
finer level is bilinearly upsampled and rescaled by the resolution ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .core import validate_flow, validate_image, zero_flow
from .dataterm import LinearizedData, SparseMatches
from .solver import SolverConfig, admm_solve


@dataclass(frozen=True)
class PyramidConfig:
    """Scale schedule and per-level processing parameters.

    ``scale`` is the per-level size ratio; levels stop once a dimension would
    drop below ``min_size``. ``prefilter_variance`` is the variance of the
    Gaussian applied to the inputs before anything else. ``warps`` re-runs
    warp+solve per level. The weighted median uses an odd ``median_window``
    and intensity scale ``median_sigma`` (in the 0..255 convention).
    """

    scale: float = 0.75
    min_size: int = 16
    warps: int = 5
    prefilter_variance: float = 0.9
    median_window: int = 5
    median_sigma: float = 10.0

    def __post_init__(self):
        if not (0 < self.scale < 1):
            raise ValueError("scale must be in (0, 1)")
        if self.min_size < 8:
            raise ValueError("min_size must be >= 8")
        if self.warps < 1:
            raise ValueError("warps must be >= 1")
        if self.median_window % 2 != 1 or self.median_window < 1:
            raise ValueError("median_window must be odd and >= 1")


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with pixel-center alignment (exact on affine images)."""
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    if img.ndim == 2:
        tl = img[y0[:, None], x0[None, :]]
        tr = img[y0[:, None], x1[None, :]]
        bl = img[y1[:, None], x0[None, :]]
        br = img[y1[:, None], x1[None, :]]
        top = tl + fx * (tr - tl)
        bot = bl + fx * (br - bl)
        return top + fy * (bot - top)
    out = np.empty((out_h, out_w) + img.shape[2:], dtype=img.dtype)
    for c in range(img.shape[2]):
        out[..., c] = _resize_bilinear(img[..., c], out_h, out_w)
    return out


def build_pyramid(image: np.ndarray, config: PyramidConfig) -> list[np.ndarray]:
    """Prefiltered resolution pyramid, level 0 at full size.

    Each coarser level is Gaussian-smoothed (antialias variance matched to
    the scale ratio) and bilinearly resampled by ``config.scale``; levels
    stop before a dimension falls below ``config.min_size``.
    """
    img = validate_image(image)
    h, w = img.shape
    if min(h, w) < config.min_size:
        raise ValueError(
            f"image {w}x{h} smaller than the minimum pyramid size {config.min_size}"
        )
    sigma0 = float(np.sqrt(config.prefilter_variance))
    levels = [ndimage.gaussian_filter(img, sigma=sigma0, mode="nearest")]
    # antialias smoothing for a downsampling ratio s
    sigma_d = 0.5 * float(np.sqrt(1.0 / config.scale ** 2 - 1.0))
    while True:
        h, w = levels[-1].shape
        nh, nw = round(h * config.scale), round(w * config.scale)
        if min(nh, nw) < config.min_size:
            break
        smoothed = ndimage.gaussian_filter(levels[-1], sigma=sigma_d, mode="nearest")
        levels.append(_resize_bilinear(smoothed, nh, nw))
    return levels


def warp_image(i2: np.ndarray, flow: np.ndarray):
    """Bilinear sample of the second frame at x + w(x).

    Returns (warped, valid). Samples outside the grid are invalid; their
    warped value comes from edge-clamped sampling and must be excluded from
    the data term (see linearize).
    """
    img = validate_image(i2, "i2")
    w = validate_flow(flow)
    h, wd = img.shape
    ys, xs = np.mgrid[0:h, 0:wd].astype(np.float64)
    sx = xs + w[..., 0]
    sy = ys + w[..., 1]
    valid = (sx >= 0) & (sx <= wd - 1) & (sy >= 0) & (sy <= h - 1)
    cx = np.clip(sx, 0, wd - 1)
    cy = np.clip(sy, 0, h - 1)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, wd - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cx - x0
    fy = cy - y0
    top = img[y0, x0] + fx * (img[y0, x1] - img[y0, x0])
    bot = img[y1, x0] + fx * (img[y1, x1] - img[y1, x0])
    return top + fy * (bot - top), valid


def linearize(i1: np.ndarray, warped_i2: np.ndarray, valid: np.ndarray) -> LinearizedData:
    """Temporal difference and spatial gradients of the warped frame.

    I_t = warped - i1; gradients are central differences (one-sided at the
    borders). Invalid pixels have gradient and temporal difference zeroed,
    which removes them from the data term.
    """
    a = validate_image(i1, "i1")
    b = validate_image(warped_i2, "warped_i2")
    if a.shape != b.shape or a.shape != valid.shape:
        raise ValueError("shape mismatch")
    it = b - a
    gx = np.empty_like(b)
    gy = np.empty_like(b)
    gx[:, 1:-1] = 0.5 * (b[:, 2:] - b[:, :-2])
    gx[:, 0] = b[:, 1] - b[:, 0] if b.shape[1] > 1 else 0.0
    gx[:, -1] = b[:, -1] - b[:, -2] if b.shape[1] > 1 else 0.0
    gy[1:-1, :] = 0.5 * (b[2:, :] - b[:-2, :])
    gy[0, :] = b[1, :] - b[0, :] if b.shape[0] > 1 else 0.0
    gy[-1, :] = b[-1, :] - b[-2, :] if b.shape[0] > 1 else 0.0
    off = ~valid
    gx[off] = 0.0
    gy[off] = 0.0
    it = np.where(off, 0.0, it)
    return LinearizedData(ix=gx, iy=gy, it=it)


def weighted_median_filter(flow: np.ndarray, guide: np.ndarray,
                           window: int = 5, sigma: float = 10.0) -> np.ndarray:
    """Guide-weighted median of each flow component over square windows.

    Weights are exp(-(guide difference)^2/(2 sigma^2)); windows truncate at
    the borders. Being a selection filter, every output value is one of the
    window's inputs.
    """
    if window % 2 != 1 or window < 1:
        raise ValueError("window must be odd and >= 1")
    f = validate_flow(flow)
    g = validate_image(guide, "guide")
    if g.shape != f.shape[:2]:
        raise ValueError("guide and flow shapes differ")
    out = np.empty_like(f)
    _kernels.weighted_median_flow(f, g, window // 2, float(sigma), out)
    return out


def upsample_flow(flow: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear flow upsampling with displacements rescaled per axis."""
    f = validate_flow(flow)
    h, w = f.shape[:2]
    up = _resize_bilinear(f, out_h, out_w)
    up[..., 0] *= out_w / w
    up[..., 1] *= out_h / h
    return up


def rescale_matches(matches: SparseMatches, full_shape, level_shape) -> SparseMatches | None:
    """Project matches onto a pyramid level.

    Coordinates and displacements are multiplied by the per-axis level scale;
    each match lands on the nearest level pixel. Collisions keep the first
    match in the original file order (row-major grid order when the source
    order is unavailable).
    """
    fh, fw = full_shape
    lh, lw = level_shape
    sx = lw / fw
    sy = lh / fh
    if matches.entries is not None:
        entries = matches.entries
    else:
        ys, xs = np.nonzero(matches.mask)
        entries = np.stack(
            [xs, ys, matches.m[ys, xs, 0], matches.m[ys, xs, 1]], axis=1
        ).astype(np.float64)
    m = np.zeros((lh, lw, 2), dtype=np.float64)
    mask = np.zeros((lh, lw), dtype=bool)
    for x, y, mx, my in entries:
        px = int(round(x * sx))
        py = int(round(y * sy))
        if not (0 <= px < lw and 0 <= py < lh):
            continue
        if mask[py, px]:
            continue
        mask[py, px] = True
        m[py, px, 0] = mx * sx
        m[py, px, 1] = my * sy
    if not mask.any():
        return None
    return SparseMatches(m=m, mask=mask)


def coarse_to_fine_estimate(i1: np.ndarray, i2: np.ndarray,
                            matches: SparseMatches | None = None,
                            solver_config: SolverConfig | None = None,
                            pyramid_config: PyramidConfig | None = None,
                            on_progress=None) -> np.ndarray:
    """Estimate the flow from frame 1 to frame 2 over the full pyramid.

    Starts from zero flow at the coarsest level. Per warp, the solver
    re-linearizes about the current flow: the temporal term is shifted by
    -grad(I).w0 so the solved unknown is the full flow, not the increment.
    Duals reset at every warp. ``on_progress(level, warp, info)`` observes
    each solve.
    """
    a = validate_image(i1, "i1")
    b = validate_image(i2, "i2")
    if a.shape != b.shape:
        raise ValueError("frames must have the same shape")
    scfg = solver_config or SolverConfig()
    pcfg = pyramid_config or PyramidConfig()
    pyr1 = build_pyramid(a, pcfg)
    pyr2 = build_pyramid(b, pcfg)
    flow = None
    for level in range(len(pyr1) - 1, -1, -1):
        lh, lw = pyr1[level].shape
        if flow is None:
            flow = zero_flow(lh, lw)
        else:
            flow = upsample_flow(flow, lh, lw)
        level_matches = None
        if matches is not None:
            level_matches = rescale_matches(matches, a.shape, (lh, lw))
        for warp in range(pcfg.warps):
            warped, valid = warp_image(pyr2[level], flow)
            data = linearize(pyr1[level], warped, valid)
            # linearize about the warp point: rho(w) = grad.(w - w0) + It
            it = data.it - data.ix * flow[..., 0] - data.iy * flow[..., 1]
            data = LinearizedData(ix=data.ix, iy=data.iy, it=it)
            flow, info = admm_solve(data, level_matches, flow, scfg)
            flow = weighted_median_filter(
                flow, pyr1[level], pcfg.median_window, pcfg.median_sigma
            )
            if on_progress is not None:
                on_progress(level, warp, info)
    return flow
