"""Unit-norm embedding vectors per term code: cosine kernel, full scans,
deterministic synthetic fixtures, and the AMQE binary file format.

Vectors are held and computed in float64 but quantized through float32 at
store construction, matching the on-disk precision so that save followed
by load reproduces the store bitwise.

AMQE file layout (little-endian): magic ``AMQE``, u32 version = 1,
u32 dim, u64 count, then ``count`` records of ``{u64 code, dim x f32}``
sorted ascending by code.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Dictionary

_MAGIC = b"AMQE"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_CODE = struct.Struct("<Q")

_MASK64 = (1 << 64) - 1


class EmbeddingError(ValueError):
    """Invalid vector arithmetic input (zero norm, NaN, dimension mismatch)."""


class EmbeddingFormatError(ValueError):
    """Unreadable or inconsistent embedding file."""


def normalize(raw: Iterable[float]) -> np.ndarray:
    """Scale to unit Euclidean norm, preserving direction."""
    vec = np.asarray(list(raw) if not isinstance(raw, np.ndarray) else raw, dtype=np.float64)
    if vec.ndim != 1:
        raise EmbeddingError(f"expected a 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError("vector has non-finite components")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize the zero vector")
    return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


def mean_composite(vectors: list[np.ndarray]) -> np.ndarray:
    """Renormalized componentwise mean of unit vectors.

    An exactly-zero mean (antipodal inputs) is an error: it signals a
    pathological query rather than something to paper over.
    """
    if not vectors:
        raise EmbeddingError("mean_composite of an empty list")
    dims = {np.asarray(v).shape for v in vectors}
    if len(dims) > 1:
        raise EmbeddingError(f"dimension mismatch across composite inputs: {sorted(dims)}")
    mean = np.mean(np.stack([np.asarray(v, dtype=np.float64) for v in vectors]), axis=0)
    if float(np.linalg.norm(mean)) == 0.0:
        raise EmbeddingError("composite mean is the zero vector (antipodal inputs)")
    return normalize(mean)


@dataclass
class EmbeddingStore:
    """One unit vector per term code, in ascending code order."""

    dim: int
    codes: list[int]
    matrix: np.ndarray  # shape (len(codes), dim), float64 of f32-exact values
    _index: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise EmbeddingError(f"dimension must be positive, got {self.dim}")
        order = np.argsort(self.codes, kind="stable")
        self.codes = [int(self.codes[i]) for i in order]
        self.matrix = np.ascontiguousarray(self.matrix[order], dtype=np.float64)
        if self.matrix.shape != (len(self.codes), self.dim):
            raise EmbeddingError(
                f"matrix shape {self.matrix.shape} does not match "
                f"{len(self.codes)} codes x dim {self.dim}"
            )
        if len(set(self.codes)) != len(self.codes):
            raise EmbeddingError("duplicate codes in embedding store")
        self._index = {code: i for i, code in enumerate(self.codes)}

    @classmethod
    def from_vectors(cls, vectors: Mapping[int, Iterable[float]]) -> "EmbeddingStore":
        """Build a store from raw (not necessarily unit) vectors.

        Normalizes in float64, then rounds through float32 so the store is
        exactly what a save/load round-trip would produce.
        """
        if not vectors:
            raise EmbeddingError("cannot build an empty store")
        codes = sorted(int(c) for c in vectors)
        rows = [normalize(vectors[c]) for c in codes]
        dim = rows[0].shape[0]
        matrix = np.stack(rows).astype(np.float32).astype(np.float64)
        return cls(dim=int(dim), codes=codes, matrix=matrix)

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code: int) -> bool:
        return code in self._index

    def vector(self, code: int) -> np.ndarray:
        try:
            return self.matrix[self._index[code]]
        except KeyError:
            raise EmbeddingError(f"no vector for code {code}") from None

    def score_all(self, probe: np.ndarray) -> list[tuple[int, float]]:
        """Cosine of the probe against every stored vector, in code order."""
        probe = np.asarray(probe, dtype=np.float64)
        if probe.shape != (self.dim,):
            raise EmbeddingError(f"probe shape {probe.shape} does not match dim {self.dim}")
        sims = np.clip(self.matrix @ probe, -1.0, 1.0)
        return [(code, float(s)) for code, s in zip(self.codes, sims)]

    def verify_coverage(self, dictionary: Dictionary) -> None:
        """Every dictionary code has a vector and vice versa."""
        store_codes = set(self.codes)
        dict_codes = set(dictionary.codes())
        missing = sorted(dict_codes - store_codes)
        extra = sorted(store_codes - dict_codes)
        if missing:
            raise EmbeddingFormatError(f"embeddings missing dictionary codes: {missing[:10]}")
        if extra:
            raise EmbeddingFormatError(f"embeddings carry unknown codes: {extra[:10]}")


def score_all(store: EmbeddingStore, probe: np.ndarray) -> list[tuple[int, float]]:
    return store.score_all(probe)


# -- deterministic synthetic vectors ---------------------------------------


def _mix64(x: int) -> int:
    """splitmix64 finalizer; fixed mixing independent of platform RNG state."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _gaussians(seed: int, code: int, n: int) -> list[float]:
    """n standard normals from a per-(seed, code) splitmix64 stream via Box-Muller."""
    state = _mix64((seed & _MASK64) ^ _mix64(code))
    out: list[float] = []

    def next_unit() -> float:
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        # (0, 1]: never 0, so log() below is safe
        return ((_mix64(state) >> 11) + 1) * 2.0**-53

    while len(out) < n:
        u1, u2 = next_unit(), next_unit()
        r = math.sqrt(-2.0 * math.log(u1))
        out.append(r * math.cos(2.0 * math.pi * u2))
        out.append(r * math.sin(2.0 * math.pi * u2))
    return out[:n]


def synth_embeddings(dictionary: Dictionary, dim: int, seed: int) -> EmbeddingStore:
    """Deterministic per-code Gaussian vectors, normalized.

    A pure function of (code, dim, seed): the stream for each code is
    independent of dictionary order, so regenerating after inserting terms
    leaves existing vectors unchanged.
    """
    if dim < 2:
        raise EmbeddingError(f"synthetic dimension must be >= 2, got {dim}")
    if len(dictionary) == 0:
        raise EmbeddingError("cannot synthesize embeddings for an empty dictionary")
    return EmbeddingStore.from_vectors(
        {term.code: _gaussians(seed, term.code, dim) for term in dictionary}
    )


# -- AMQE binary serialization ----------------------------------------------


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, store.dim, len(store)))
        f32 = store.matrix.astype("<f4")
        for i, code in enumerate(store.codes):
            fh.write(_CODE.pack(code))
            fh.write(f32[i].tobytes())


def load_embeddings(path: str | Path, dictionary: Dictionary | None = None) -> EmbeddingStore:
    """Read an AMQE file; when a dictionary is given, the codes must cover
    it exactly."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise EmbeddingFormatError(f"{path}: dimension is 0")
    record = _CODE.size + 4 * dim
    expected = _HEADER.size + record * count
    if len(data) != expected:
        raise EmbeddingFormatError(
            f"{path}: expected {expected} bytes for {count} records, got {len(data)}"
        )
    codes: list[int] = []
    rows = np.empty((count, dim), dtype=np.float64)
    offset = _HEADER.size
    prev_code = -1
    for i in range(count):
        (code,) = _CODE.unpack_from(data, offset)
        if code <= prev_code:
            raise EmbeddingFormatError(f"{path}: codes not strictly ascending at record {i}")
        prev_code = code
        offset += _CODE.size
        rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += 4 * dim
        codes.append(code)
    store = EmbeddingStore(dim=int(dim), codes=codes, matrix=rows)
    if dictionary is not None:
        store.verify_coverage(dictionary)
    return store
