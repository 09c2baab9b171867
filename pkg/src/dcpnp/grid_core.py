"""2D sample grids, the DFT convention, white-noise sampling and grid I/O.

Grids are plain numpy arrays: real grids are 2D float64, complex grids are
2D complex128, frequency maps are 2D nonnegative float64. All public
operations validate shapes and finiteness and are pure.

DFT convention used throughout: unnormalized forward (plain sum, no 1/HW),
inverse carries the 1/HW factor. Under this convention white noise with
per-pixel variance s**2 has expected per-bin power s**2 * H * W, which is
the target level the spectral-homogenization module fills toward.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DCPG"


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator: identical seed gives an identical stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_real_grid(a) -> np.ndarray:
    """Validate and return a 2D float64 grid with finite entries."""
    g = np.asarray(a, dtype=np.float64)
    _check_grid(g)
    return g


def as_complex_grid(a) -> np.ndarray:
    """Validate and return a 2D complex128 grid with finite entries."""
    g = np.asarray(a, dtype=np.complex128)
    _check_grid(g)
    return g


def _check_grid(g: np.ndarray) -> None:
    if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2D grid, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("grid contains non-finite samples")


def forward_dft(g: np.ndarray) -> np.ndarray:
    """Unnormalized forward 2D DFT (sum convention).

    Satisfies Parseval as sum |G|^2 == H*W * sum |g|^2. Works for real or
    complex grids of arbitrary (not necessarily power-of-two) size.
    """
    g = np.asarray(g)
    _check_grid(g)
    return np.fft.fft2(g)


def inverse_dft(G: np.ndarray) -> np.ndarray:
    """Inverse 2D DFT carrying the 1/(H*W) factor; exact inverse of forward_dft."""
    G = np.asarray(G)
    _check_grid(G)
    return np.fft.ifft2(G)


def is_hermitian_symmetric(G: np.ndarray, rel_tol: float = 1e-10) -> bool:
    """True if G(w) == conj(G(-w mod N)) within rel_tol of the grid's peak magnitude."""
    G = np.asarray(G)
    mirrored = np.conj(G[(-np.arange(G.shape[0])) % G.shape[0]][:, (-np.arange(G.shape[1])) % G.shape[1]])
    scale = np.max(np.abs(G))
    if scale == 0.0:
        return True
    return bool(np.max(np.abs(G - mirrored)) <= rel_tol * scale)


def sample_white_gaussian(rng: np.random.Generator, h: int, w: int, std: float) -> np.ndarray:
    """I.i.d. zero-mean Gaussian grid with the given standard deviation."""
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    if h < 1 or w < 1:
        raise ValueError(f"grid dimensions must be positive, got {h}x{w}")
    if std == 0.0:
        return np.zeros((h, w))
    return std * rng.standard_normal((h, w))


# --- serialization ---------------------------------------------------------
#
# Binary layout: magic "DCPG", height and width as little-endian uint32,
# then row-major little-endian float64 payload (re/im interleaved for
# complex grids). Realness is inferred from the payload length.


def save_grid(path, g: np.ndarray) -> None:
    g = np.asarray(g)
    _check_grid(g)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", g.shape[0], g.shape[1]))
        if np.iscomplexobj(g):
            inter = np.empty(g.shape + (2,), dtype="<f8")
            inter[..., 0] = g.real
            inter[..., 1] = g.imag
            fh.write(inter.tobytes())
        else:
            fh.write(np.ascontiguousarray(g, dtype="<f8").tobytes())


def load_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic bytes {magic!r}")
        h, w = struct.unpack("<II", fh.read(8))
        payload = fh.read()
    n = h * w
    if len(payload) == 8 * n:
        return np.frombuffer(payload, dtype="<f8").reshape(h, w).astype(np.float64)
    if len(payload) == 16 * n:
        inter = np.frombuffer(payload, dtype="<f8").reshape(h, w, 2)
        return (inter[..., 0] + 1j * inter[..., 1]).astype(np.complex128)
    raise ValueError(f"payload length {len(payload)} does not match {h}x{w} real or complex grid")


def save_pgm(path, g: np.ndarray, window: tuple[float, float] | None = None) -> None:
    """16-bit binary PGM export after windowing, for visual inspection.

    `window` is the (low, high) intensity range mapped to [0, 65535];
    defaults to the grid's own min/max. Complex grids export magnitudes.
    """
    g = np.asarray(g)
    _check_grid(g)
    if np.iscomplexobj(g):
        g = np.abs(g)
    lo, hi = window if window is not None else (float(g.min()), float(g.max()))
    if hi <= lo:
        hi = lo + 1.0
    scaled = np.clip((g - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.round(scaled * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())
