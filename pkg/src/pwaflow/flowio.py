"""File ingestion/emission, evaluation metrics, and flow visualization.

Formats:

- Middlebury ``.flo``: little-endian float32 magic 202021.25, int32 width,
  int32 height, then row-major interleaved (u, v) float32 pairs. Round trips
  are bit exact.
- KITTI flow PNG: 16-bit 3-channel; u = (ch1 - 2^15)/64, v = (ch2 - 2^15)/64,
  validity = (ch3 != 0). Quantization bounds round-trip error by 1/128.
- Matches: text lines ``x1 y1 x2 y2 [extra...]``; the stored displacement is
  (x2-x1, y2-y1) at pixel (x1, y1).
- Grayscale images: 8/16-bit PGM (P2/P5) and PNG, converted to float
  intensities on a 0..255 scale; color PNG is luma-converted with a warning.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FormatError, validate_flow

FLO_MAGIC = 202021.25


@dataclass(frozen=True)
class EvaluationReport:
    """Mean endpoint error over the evaluated pixels."""

    aep: float
    count: int
    mask_provenance: str


def write_flo(path, flow: np.ndarray) -> None:
    """Write a flow field as a Middlebury .flo file (float32)."""
    f = validate_flow(flow)
    h, w = f.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(f.astype("<f4").tobytes())


def read_flo(path) -> np.ndarray:
    """Read a Middlebury .flo file; returns float64 (H, W, 2)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated .flo header")
    magic, = struct.unpack_from("<f", raw, 0)
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad .flo magic {magic!r}")
    w, h = struct.unpack_from("<ii", raw, 4)
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: nonpositive dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated .flo data ({len(raw)} < {expected} bytes)")
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12)
    return data.reshape(h, w, 2).astype(np.float64)


def write_kitti_flow_png(path, flow: np.ndarray, valid: np.ndarray | None = None) -> None:
    """Write flow as a KITTI 16-bit 3-channel PNG (quantized to 1/64 px)."""
    import cv2

    f = validate_flow(flow)
    h, w = f.shape[:2]
    if valid is None:
        valid = np.ones((h, w), dtype=bool)
    enc = np.zeros((h, w, 3), dtype=np.uint16)
    enc[..., 0] = np.clip(np.rint(f[..., 0] * 64.0 + 2 ** 15), 0, 65535).astype(np.uint16)
    enc[..., 1] = np.clip(np.rint(f[..., 1] * 64.0 + 2 ** 15), 0, 65535).astype(np.uint16)
    enc[..., 2] = valid.astype(np.uint16)
    # OpenCV stores channels as BGR
    if not cv2.imwrite(str(path), enc[..., ::-1]):
        raise FormatError(f"{path}: PNG write failed")


def read_kitti_flow_png(path):
    """Read a KITTI flow PNG; returns (flow (H, W, 2), valid mask)."""
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"{path}: unreadable PNG")
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint16:
        raise FormatError(f"{path}: KITTI flow PNG must be 16-bit 3-channel")
    rgb = img[..., ::-1].astype(np.float64)
    flow = np.empty(img.shape[:2] + (2,), dtype=np.float64)
    flow[..., 0] = (rgb[..., 0] - 2 ** 15) / 64.0
    flow[..., 1] = (rgb[..., 1] - 2 ** 15) / 64.0
    valid = rgb[..., 2] != 0
    return flow, valid


def read_matches(path, width: int, height: int):
    """Parse a DeepMatching-style match file into a sparse match field.

    Each line is ``x1 y1 x2 y2 [scores...]``; the match displacement at
    (x1, y1) is (x2-x1, y2-y1). Duplicate pixels keep the first occurrence;
    out-of-bounds lines are skipped (their count is reported by the second
    return value). Malformed lines raise with their line number.
    """
    from .dataterm import SparseMatches

    m = np.zeros((height, width, 2), dtype=np.float64)
    mask = np.zeros((height, width), dtype=bool)
    entries = []
    skipped = 0
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 4:
                raise FormatError(f"{path}:{lineno}: expected at least 4 fields")
            try:
                x1, y1, x2, y2 = (float(v) for v in parts[:4])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from exc
            px, py = int(round(x1)), int(round(y1))
            if not (0 <= px < width and 0 <= py < height):
                skipped += 1
                continue
            if mask[py, px]:
                continue
            mask[py, px] = True
            m[py, px] = (x2 - x1, y2 - y1)
            entries.append((x1, y1, x2 - x1, y2 - y1))
    if skipped:
        warnings.warn(f"{path}: skipped {skipped} out-of-bounds matches")
    arr = np.array(entries, dtype=np.float64).reshape(-1, 4)
    return SparseMatches(m=m, mask=mask, entries=arr), skipped


def evaluate_aep(estimate: np.ndarray, ground_truth: np.ndarray,
                 mask: np.ndarray | None = None,
                 provenance: str = "all") -> EvaluationReport:
    """Mean Euclidean endpoint distance over the masked pixels."""
    est = validate_flow(estimate, "estimate")
    gt = validate_flow(ground_truth, "ground_truth")
    if est.shape != gt.shape:
        raise ValueError("estimate and ground truth shapes differ")
    if mask is None:
        mask = np.ones(est.shape[:2], dtype=bool)
    if mask.shape != est.shape[:2]:
        raise ValueError("mask shape differs from the fields")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("empty evaluation mask")
    d = np.sqrt(np.sum((est - gt) ** 2, axis=-1))
    return EvaluationReport(aep=float(d[mask].mean()), count=count, mask_provenance=provenance)


def make_colorwheel() -> np.ndarray:
    """The standard 55-bin RGB color wheel used for flow visualization."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((RY + YG + GC + CB + BM + MR, 3))
    col = 0
    wheel[col:col + RY, 0] = 255
    wheel[col:col + RY, 1] = np.floor(255 * np.arange(RY) / RY)
    col += RY
    wheel[col:col + YG, 0] = 255 - np.floor(255 * np.arange(YG) / YG)
    wheel[col:col + YG, 1] = 255
    col += YG
    wheel[col:col + GC, 1] = 255
    wheel[col:col + GC, 2] = np.floor(255 * np.arange(GC) / GC)
    col += GC
    wheel[col:col + CB, 1] = 255 - np.floor(255 * np.arange(CB) / CB)
    wheel[col:col + CB, 2] = 255
    col += CB
    wheel[col:col + BM, 2] = 255
    wheel[col:col + BM, 0] = np.floor(255 * np.arange(BM) / BM)
    col += BM
    wheel[col:col + MR, 2] = 255 - np.floor(255 * np.arange(MR) / MR)
    wheel[col:col + MR, 0] = 255
    return wheel


COLORWHEEL = make_colorwheel()


def colorize_flow(flow: np.ndarray, max_magnitude: float | None = None) -> np.ndarray:
    """Color-wheel rendering of a flow field as an RGB uint8 image.

    Hue encodes the flow angle, saturation the magnitude normalized by
    ``max_magnitude`` (the 99th percentile when absent). Zero flow is white;
    magnitudes at or beyond the normalizer are fully saturated wheel colors.
    """
    f = validate_flow(flow)
    u = f[..., 0]
    v = f[..., 1]
    rad = np.sqrt(u * u + v * v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(rad, 99))
    if max_magnitude <= 0:
        max_magnitude = 1.0
    return _wheel_image(u, v, rad / max_magnitude)


def _wheel_image(u, v, rad):
    wheel = COLORWHEEL
    ncols = wheel.shape[0]
    rad = np.minimum(rad, 1.0)
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = (k0 + 1) % ncols
    frac = fk - k0
    out = np.empty(u.shape + (3,), dtype=np.uint8)
    for c in range(3):
        col0 = wheel[k0, c] / 255.0
        col1 = wheel[k1, c] / 255.0
        col = (1 - frac) * col0 + frac * col1
        col = 1 - rad * (1 - col)
        out[..., c] = np.floor(255 * col).astype(np.uint8)
    return out


def motion_edges(flow: np.ndarray, threshold: float) -> np.ndarray:
    """Mask of pixels whose flow derivative magnitude exceeds the threshold.

    Uses forward differences of both components (last row/column padded with
    zero difference); the magnitude is the root sum of squares of all four
    derivatives.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    f = validate_flow(flow)
    h, w = f.shape[:2]
    acc = np.zeros((h, w))
    for c in range(2):
        dx = np.zeros((h, w))
        dy = np.zeros((h, w))
        dx[:, :-1] = f[:, 1:, c] - f[:, :-1, c]
        dy[:-1, :] = f[1:, :, c] - f[:-1, :, c]
        acc += dx * dx + dy * dy
    return np.sqrt(acc) > threshold


def read_image(path) -> np.ndarray:
    """Read a grayscale image (PGM or PNG) as float64 intensities 0..255.

    16-bit inputs are rescaled to the 0..255 range; color inputs are
    luma-converted (BT.601) with a warning.
    """
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix in (".pgm", ".ppm"):
        return _read_pgm(p)
    return _read_png(p)


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise FormatError(f"{path}: truncated PGM header")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            pos = raw.find(b"\n", pos)
            if pos < 0:
                raise FormatError(f"{path}: unterminated PGM comment")
            continue
        if ch.isspace():
            pos += 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if w <= 0 or h <= 0 or maxval <= 0 or maxval > 65535:
        raise FormatError(f"{path}: bad PGM dimensions or maxval")
    if magic == b"P2":
        vals = np.array(raw[pos:].split(), dtype=np.float64)
        if vals.size != w * h:
            raise FormatError(f"{path}: PGM pixel count mismatch")
        data = vals.reshape(h, w)
    else:
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else np.uint8
        count = w * h
        data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        data = data.reshape(h, w).astype(np.float64)
    return data * (255.0 / maxval)


def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> None:
    """Write intensities 0..255 as a binary PGM (16-bit by default)."""
    img = np.asarray(image, dtype=np.float64)
    scaled = np.clip(np.rint(img * (maxval / 255.0)), 0, maxval)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    payload = scaled.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    Path(path).write_bytes(header + payload)


def _read_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        mode = im.mode
        if mode in ("L", "P"):
            return np.asarray(im.convert("L"), dtype=np.float64)
        if mode in ("I", "I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64)
            return arr * (255.0 / 65535.0)
        warnings.warn(f"{path}: color input converted to luma")
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
        return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def read_mask_png(path) -> np.ndarray:
    """Read a PNG mask; nonzero pixels are True."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr != 0


def write_png_rgb(path, rgb: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def write_png_mask(path, mask: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path)
