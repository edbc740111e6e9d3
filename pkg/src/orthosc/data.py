"""Image ingestion, patch extraction, ZCA whitening, and binary file formats.

All on-disk formats share one layout: a 4-byte ASCII magic, unsigned 32-bit
little-endian dimensions, then the payload as row-major 64-bit
little-endian floats.

    OSC1  dictionary      dims (m, n);       payload m*n
    OSW1  whitening       dims (m, m);       payload m (mean) + m*m (matrix)
    OSP1  patches         dims (count, m);   payload count*m, m a perfect square
    OSF1  feature map     dims (N, N, B);    payload N*N*B
    OSM1  layer stack     u32 layer count; per layer an embedded OSC1 block,
                          u32 reg mode (0 shared / 1 per-unit), u32 sign
                          policy (0 free / 1 non-negative), then 1 or n
                          lambda floats; head: u32 K, u32 n_last, K*n_last
                          weight floats, K bias floats.

Readers validate lengths before touching the payload, so corrupt or
truncated files fail with ValueError rather than crashing.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .types import (
    Dictionary,
    FeatureMap,
    LayerStack,
    RegCoeffs,
    RegMode,
    SignPolicy,
    WhiteningTransform,
    ORTH_TOL,
)

MAGIC_DICTIONARY = b"OSC1"
MAGIC_WHITENING = b"OSW1"
MAGIC_PATCHES = b"OSP1"
MAGIC_FEATURE_MAP = b"OSF1"
MAGIC_MODEL = b"OSM1"

_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class PatchSet:
    """Flattened square patches, one per row."""

    patches: np.ndarray
    patch_side: int

    def __post_init__(self):
        arr = np.array(self.patches, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"patches must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("patches contain non-finite entries")
        if arr.shape[1] != self.patch_side**2:
            raise ValueError(
                f"patch dim {arr.shape[1]} != patch_side^2 = {self.patch_side ** 2}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "patches", arr)

    @property
    def count(self) -> int:
        return self.patches.shape[0]

    @property
    def dim(self) -> int:
        return self.patches.shape[1]


# ---------------------------------------------------------------------------
# PGM input
# ---------------------------------------------------------------------------


def _pgm_tokens(data: bytes):
    """Yield header tokens, skipping whitespace and # comments."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
        else:
            start = i
            while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            yield start, data[start:i]


def load_image_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM file as a grayscale matrix scaled to [0, 1].

    Supports 8-bit and big-endian 16-bit samples (maxval up to 65535).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = _pgm_tokens(data)
    try:
        _, magic = next(tokens)
    except StopIteration:
        raise ValueError("empty PGM file") from None
    if magic != b"P5":
        raise ValueError(f"unsupported magic {magic!r}; only binary P5 is accepted")
    fields = []
    pos = len(data)
    for _ in range(3):
        try:
            start, tok = next(tokens)
        except StopIteration:
            raise ValueError("malformed PGM header: missing dimensions/maxval") from None
        try:
            fields.append(int(tok))
        except ValueError:
            raise ValueError(f"malformed PGM header token {tok!r}") from None
        pos = start + len(tok)
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"bad PGM dimensions {width}x{height}")
    if not (0 < maxval <= 65535):
        raise ValueError(f"PGM maxval {maxval} out of range (0, 65535]")
    # exactly one whitespace byte separates the header from the raster
    payload = data[pos + 1 :]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    if len(payload) < expected:
        raise ValueError(
            f"truncated PGM payload: expected {expected} bytes, found {len(payload)}"
        )
    raster = np.frombuffer(payload[:expected], dtype=dtype).reshape(height, width)
    return raster.astype(np.float64) / float(maxval)


def save_image_pgm(path, img: np.ndarray) -> None:
    """Write a [0, 1] grayscale matrix as an 8-bit binary PGM."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2:
        raise ValueError("image must be 2-D")
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype("u1")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + quantized.tobytes())


# ---------------------------------------------------------------------------
# Patches and whitening
# ---------------------------------------------------------------------------


def extract_patches(img: np.ndarray, patch_side: int, count: int, rng_seed: int) -> PatchSet:
    """Sample `count` patches at uniform random positions, each mean-subtracted."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("image must be a 2-D grayscale matrix")
    if count < 1:
        raise ValueError("count must be >= 1")
    h, w = arr.shape
    if patch_side < 1 or patch_side > h or patch_side > w:
        raise ValueError(f"patch_side {patch_side} does not fit image {h}x{w}")
    rng = np.random.default_rng(rng_seed)
    rows = rng.integers(0, h - patch_side + 1, size=count)
    cols = rng.integers(0, w - patch_side + 1, size=count)
    out = np.empty((count, patch_side * patch_side))
    for k in range(count):
        patch = arr[rows[k] : rows[k] + patch_side, cols[k] : cols[k] + patch_side]
        flat = patch.ravel()
        out[k] = flat - flat.mean()
    return PatchSet(out, patch_side)


def fit_whitening(patches: PatchSet, eps: float = 1e-8) -> WhiteningTransform:
    """ZCA transform from the sample covariance of the patch set.

    eps regularizes the eigenvalue inverse square root, so rank-deficient
    covariances still produce a finite transform.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    X = patches.patches
    mean = X.mean(axis=0)
    centered = X - mean
    denominator = max(X.shape[0] - 1, 1)
    cov = centered.T @ centered / denominator
    d, E = np.linalg.eigh(cov)
    d = np.maximum(d, 0.0)
    matrix = (E * (d + eps) ** -0.5) @ E.T
    matrix = 0.5 * (matrix + matrix.T)
    return WhiteningTransform(mean=mean, matrix=matrix)


def apply_whitening(wt: WhiteningTransform, patches: PatchSet) -> PatchSet:
    """Map every patch through the whitening transform."""
    if patches.dim != wt.dim:
        raise ValueError(f"patch dim {patches.dim} != whitening dim {wt.dim}")
    out = (patches.patches - wt.mean) @ wt.matrix
    return PatchSet(out, patches.patch_side)


# ---------------------------------------------------------------------------
# Binary serialization
# ---------------------------------------------------------------------------


class _Reader:
    """Cursor over a byte buffer with strict bounds checking."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, nbytes: int) -> bytes:
        if nbytes < 0 or self.pos + nbytes > len(self.data):
            raise ValueError(
                f"{self.path}: truncated file (needed {nbytes} bytes at offset {self.pos})"
            )
        chunk = self.data[self.pos : self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def magic(self, expected: bytes) -> None:
        found = self.take(4)
        if found != expected:
            raise ValueError(
                f"{self.path}: bad magic: expected {expected.decode()!r}, "
                f"found {found!r}"
            )

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def floats(self, count: int) -> np.ndarray:
        if count > (len(self.data) - self.pos) // 8:
            raise ValueError(
                f"{self.path}: truncated file (payload of {count} floats missing)"
            )
        return np.frombuffer(self.take(8 * count), dtype="<f8").copy()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ValueError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def _u32(value: int) -> bytes:
    if not (0 <= value <= _U32_MAX):
        raise ValueError(f"dimension {value} overflows the 32-bit header field")
    return struct.pack("<I", value)


def _floats(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def save_dictionary(path, phi: Dictionary) -> None:
    blob = MAGIC_DICTIONARY + _u32(phi.input_dim) + _u32(phi.n_basis) + _floats(phi.columns)
    with open(path, "wb") as fh:
        fh.write(blob)


def _parse_dictionary(r: _Reader) -> Dictionary:
    r.magic(MAGIC_DICTIONARY)
    m, n = r.u32(), r.u32()
    if m < 1 or n < 1:
        raise ValueError(f"{r.path}: bad dictionary dims {m}x{n}")
    cols = r.floats(m * n).reshape(m, n)
    gram_err = np.max(np.abs(cols.T @ cols - np.eye(n)))
    return Dictionary(cols, is_orthogonalized=bool(gram_err <= ORTH_TOL))


def load_dictionary(path) -> Dictionary:
    r = _Reader(_read_file(path), path)
    phi = _parse_dictionary(r)
    r.done()
    return phi


def save_whitening(path, wt: WhiteningTransform) -> None:
    blob = (
        MAGIC_WHITENING
        + _u32(wt.dim)
        + _u32(wt.dim)
        + _floats(wt.mean)
        + _floats(wt.matrix)
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def load_whitening(path) -> WhiteningTransform:
    r = _Reader(_read_file(path), path)
    r.magic(MAGIC_WHITENING)
    m1, m2 = r.u32(), r.u32()
    if m1 != m2 or m1 < 1:
        raise ValueError(f"{path}: bad whitening dims {m1}x{m2}")
    mean = r.floats(m1)
    matrix = r.floats(m1 * m1).reshape(m1, m1)
    r.done()
    return WhiteningTransform(mean=mean, matrix=matrix)


def save_patches(path, patches: PatchSet) -> None:
    blob = (
        MAGIC_PATCHES
        + _u32(patches.count)
        + _u32(patches.dim)
        + _floats(patches.patches)
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def load_patches(path) -> PatchSet:
    r = _Reader(_read_file(path), path)
    r.magic(MAGIC_PATCHES)
    count, dim = r.u32(), r.u32()
    if count < 1 or dim < 1:
        raise ValueError(f"{path}: bad patch dims {count}x{dim}")
    side = math.isqrt(dim)
    if side * side != dim:
        raise ValueError(f"{path}: patch dim {dim} is not a perfect square")
    data = r.floats(count * dim).reshape(count, dim)
    r.done()
    return PatchSet(data, side)


def save_feature_map(path, fmap: FeatureMap) -> None:
    blob = (
        MAGIC_FEATURE_MAP
        + _u32(fmap.side)
        + _u32(fmap.side)
        + _u32(fmap.channels)
        + _floats(fmap.data)
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def load_feature_map(path) -> FeatureMap:
    r = _Reader(_read_file(path), path)
    r.magic(MAGIC_FEATURE_MAP)
    n1, n2, b = r.u32(), r.u32(), r.u32()
    if n1 != n2 or n1 < 1 or b < 1:
        raise ValueError(f"{path}: bad feature-map dims {n1}x{n2}x{b}")
    data = r.floats(n1 * n2 * b).reshape(n1, n2, b)
    r.done()
    return FeatureMap(data)


_REG_MODE_CODE = {RegMode.SHARED_SCALAR: 0, RegMode.PER_UNIT: 1}
_SIGN_CODE = {SignPolicy.FREE: 0, SignPolicy.NON_NEGATIVE_ONLY: 1}
_REG_MODE_FROM = {v: k for k, v in _REG_MODE_CODE.items()}
_SIGN_FROM = {v: k for k, v in _SIGN_CODE.items()}


def save_model(path, model: LayerStack) -> None:
    parts = [MAGIC_MODEL, _u32(len(model.layers))]
    for phi, reg in model.layers:
        parts.append(MAGIC_DICTIONARY + _u32(phi.input_dim) + _u32(phi.n_basis))
        parts.append(_floats(phi.columns))
        parts.append(_u32(_REG_MODE_CODE[reg.mode]) + _u32(_SIGN_CODE[reg.sign_policy]))
        if reg.mode is RegMode.SHARED_SCALAR:
            parts.append(_floats(np.array([reg.shared])))
        else:
            parts.append(_floats(reg.per_unit))
    K, n_last = model.head_weights.shape
    parts.append(_u32(K) + _u32(n_last))
    parts.append(_floats(model.head_weights))
    parts.append(_floats(model.head_bias))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path) -> LayerStack:
    r = _Reader(_read_file(path), path)
    r.magic(MAGIC_MODEL)
    n_layers = r.u32()
    if not (1 <= n_layers <= 1024):
        raise ValueError(f"{path}: implausible layer count {n_layers}")
    layers = []
    for _ in range(n_layers):
        phi = _parse_dictionary(r)
        mode_code, sign_code = r.u32(), r.u32()
        if mode_code not in _REG_MODE_FROM or sign_code not in _SIGN_FROM:
            raise ValueError(f"{path}: unknown reg mode/sign codes {mode_code}/{sign_code}")
        mode = _REG_MODE_FROM[mode_code]
        sign = _SIGN_FROM[sign_code]
        if mode is RegMode.SHARED_SCALAR:
            reg = RegCoeffs.shared_coeff(float(r.floats(1)[0]), sign)
        else:
            reg = RegCoeffs.per_unit_coeffs(r.floats(phi.n_basis), sign)
        layers.append((phi, reg))
    K, n_last = r.u32(), r.u32()
    if K < 1 or n_last < 1:
        raise ValueError(f"{path}: bad head dims {K}x{n_last}")
    W = r.floats(K * n_last).reshape(K, n_last)
    b = r.floats(K)
    r.done()
    return LayerStack(tuple(layers), W, b)
