"""Multi-radius, cell-gridded LBP histograms for mouth-region frames.

Neighbour ``p`` of a centre pixel sits at angle ``2*pi*p/P`` from the +x axis,
counter-clockwise (so row coordinates decrease as the angle grows towards
90 degrees). Bit ``p`` is set when the bilinearly interpolated neighbour is
>= the centre. Only centres whose whole sampling circle lies inside their own
grid cell contribute to that cell's histogram.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import _accel
from ._accel import njit
from .errors import InputError

__all__ = [
    "LbpConfig",
    "lbp_code_at",
    "uniform_bin",
    "uniform_lut",
    "cell_bounds",
    "extract_frame_features",
    "extract_sequence_features",
]

_SNAP = 1e-9


@dataclass(frozen=True)
class LbpConfig:
    samples: int = 8
    radii: tuple = (1.0,)
    uniform: bool = True
    grid_rows: int = 1
    grid_cols: int = 1

    def __post_init__(self):
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        object.__setattr__(self, "radii", radii)
        if not radii:
            raise InputError("radii must be non-empty")
        if any(r <= 0 for r in radii):
            raise InputError(f"radii must be positive, got {radii}")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise InputError(f"radii must be strictly increasing, got {radii}")
        if not 4 <= self.samples <= 24:
            raise InputError(f"samples must lie in [4, 24], got {self.samples}")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise InputError("grid must have at least one cell")

    @property
    def n_bins(self):
        P = self.samples
        return P * (P - 1) + 3 if self.uniform else 2**P

    @property
    def n_cells(self):
        return self.grid_rows * self.grid_cols

    @property
    def dim(self):
        return self.n_cells * len(self.radii) * self.n_bins

    def to_dict(self):
        return {
            "samples": self.samples,
            "radii": list(self.radii),
            "uniform": self.uniform,
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
        }


def _transitions(code, P):
    rotated = ((code >> 1) | ((code & 1) << (P - 1))) & ((1 << P) - 1)
    return bin(code ^ rotated).count("1")


def uniform_lut(P):
    """Lookup table code -> u2 bin for all ``2**P`` codes.

    Uniform codes get bins ``0 .. P(P-1)+1`` in increasing code order; every
    other code shares the final bin ``P(P-1)+2``.
    """
    lut = np.empty(1 << P, dtype=np.int64)
    nonuniform = P * (P - 1) + 2
    nxt = 0
    for code in range(1 << P):
        if _transitions(code, P) <= 2:
            lut[code] = nxt
            nxt += 1
        else:
            lut[code] = nonuniform
    assert nxt == nonuniform
    return lut


_LUT_CACHE = {}


def _lut(P):
    if P not in _LUT_CACHE:
        _LUT_CACHE[P] = uniform_lut(P)
    return _LUT_CACHE[P]


def uniform_bin(code, P=8):
    if not 0 <= code < (1 << P):
        raise InputError(f"code {code} outside [0, 2**{P})")
    return int(_lut(P)[code])


def _offsets(radius, P):
    angles = 2.0 * np.pi * np.arange(P) / P
    dy = -radius * np.sin(angles)
    dx = radius * np.cos(angles)
    for arr in (dy, dx):
        near = np.abs(arr - np.round(arr)) < _SNAP
        arr[near] = np.round(arr[near])
    return dy, dx


def _margin(radius):
    return int(math.ceil(radius - _SNAP))


def cell_bounds(rows, cols, grid_rows, grid_cols):
    """(top, bottom, left, right) per cell, row-major, half-open."""
    rb = [(i * rows) // grid_rows for i in range(grid_rows + 1)]
    cb = [(j * cols) // grid_cols for j in range(grid_cols + 1)]
    return [(rb[i], rb[i + 1], cb[j], cb[j + 1]) for i in range(grid_rows) for j in range(grid_cols)]


def _codes_numpy(img, top, bottom, left, right, dy, dx, margin):
    rows, cols = img.shape
    rr = np.arange(top + margin, bottom - margin)
    cc = np.arange(left + margin, right - margin)
    if rr.size == 0 or cc.size == 0:
        return np.empty(0, dtype=np.int64)
    R, Cc = np.meshgrid(rr, cc, indexing="ij")
    center = img[R, Cc]
    codes = np.zeros(R.shape, dtype=np.int64)
    for p in range(dy.size):
        y = R + dy[p]
        x = Cc + dx[p]
        r0 = np.floor(y).astype(np.int64)
        c0 = np.floor(x).astype(np.int64)
        fy = y - r0
        fx = x - c0
        r1 = np.minimum(r0 + 1, rows - 1)
        c1 = np.minimum(c0 + 1, cols - 1)
        a = img[r0, c0]
        b = img[r0, c1]
        c = img[r1, c0]
        d = img[r1, c1]
        upper = a + fx * (b - a)
        lower = c + fx * (d - c)
        val = upper + fy * (lower - upper)
        codes |= (val >= center).astype(np.int64) << p
    return codes.ravel()


@njit
def _codes_loop(img, top, bottom, left, right, dy, dx, margin):
    rows, cols = img.shape
    nr = max(bottom - top - 2 * margin, 0)
    nc = max(right - left - 2 * margin, 0)
    out = np.empty(nr * nc, dtype=np.int64)
    P = dy.shape[0]
    k = 0
    for r in range(top + margin, bottom - margin):
        for col in range(left + margin, right - margin):
            center = img[r, col]
            code = 0
            for p in range(P):
                y = r + dy[p]
                x = col + dx[p]
                r0 = int(np.floor(y))
                c0 = int(np.floor(x))
                fy = y - r0
                fx = x - c0
                r1 = min(r0 + 1, rows - 1)
                c1 = min(c0 + 1, cols - 1)
                a = img[r0, c0]
                b = img[r0, c1]
                c = img[r1, c0]
                d = img[r1, c1]
                upper = a + fx * (b - a)
                lower = c + fx * (d - c)
                val = upper + fy * (lower - upper)
                if val >= center:
                    code |= 1 << p
            out[k] = code
            k += 1
    return out


def _cell_codes(img, bounds, radius, P, use_numba=None):
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    dy, dx = _offsets(radius, P)
    fn = _codes_loop if use_numba else _codes_numpy
    top, bottom, left, right = bounds
    return fn(img, top, bottom, left, right, dy, dx, _margin(radius))


def _as_image(image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InputError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise InputError(f"image {img.shape} is smaller than 3x3")
    return np.ascontiguousarray(img)


def lbp_code_at(image, r, c, radius=1.0, P=8):
    img = _as_image(image)
    m = _margin(radius)
    rows, cols = img.shape
    if not (m <= r < rows - m and m <= c < cols - m):
        raise InputError(f"circle of radius {radius} around ({r}, {c}) leaves the {rows}x{cols} image")
    # a (2m+1)-square window around (r, c) has exactly one valid centre
    codes = _cell_codes(img, (r - m, r + m + 1, c - m, c + m + 1), radius, P, use_numba=False)
    return int(codes[0])


def extract_frame_features(image, config, use_numba=None):
    """LBP feature vector of one frame, cell-major then radius-minor.

    Parameters
    ----------
    image : array_like
        2-D grayscale frame, intensities in [0, 255].
    config : LbpConfig
    use_numba : bool, optional
        Force a backend; ``None`` follows ``MKPLS_BACKEND``.

    Returns
    -------
    numpy.ndarray
        Vector of length ``config.dim``; each (cell, radius) block sums to 1.
    """
    img = _as_image(image)
    rows, cols = img.shape
    cells = cell_bounds(rows, cols, config.grid_rows, config.grid_cols)
    nb = config.n_bins
    P = config.samples
    lut = _lut(P) if config.uniform else None
    out = np.zeros(config.dim)
    k = 0
    for bounds in cells:
        top, bottom, left, right = bounds
        for radius in config.radii:
            m = _margin(radius)
            if bottom - top <= 2 * m or right - left <= 2 * m:
                raise InputError(
                    f"radius {radius} does not fit in a {bottom - top}x{right - left} cell "
                    f"of a {rows}x{cols} image with a {config.grid_rows}x{config.grid_cols} grid"
                )
            codes = _cell_codes(img, bounds, radius, P, use_numba)
            if lut is not None:
                codes = lut[codes]
            hist = np.bincount(codes, minlength=nb).astype(np.float64)
            out[k : k + nb] = hist / hist.sum()
            k += nb
    return out


def extract_sequence_features(frames, config, use_numba=None):
    """Stack per-frame features into an ``(n_frames, D)`` array."""
    frames = list(frames)
    if not frames:
        raise InputError("cannot extract features from an empty frame list")
    shape = np.shape(frames[0])
    for i, f in enumerate(frames):
        if np.shape(f) != shape:
            raise InputError(f"frame {i} has shape {np.shape(f)}, expected {shape}")
    return np.vstack([extract_frame_features(f, config, use_numba) for f in frames])
