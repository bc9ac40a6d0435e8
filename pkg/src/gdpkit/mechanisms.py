"""Private graph-embedding mechanisms and their closed-form sensitivities.

Two release designs are implemented.  The multi-hop design perturbs each
aggregation step ``row_normalize(A @ H + N)`` and concatenates the hop
outputs.  The decoupled design multiplies the adjacency matrix with a
privately trained, row-normalized weight matrix and releases
``row_normalize(A @ W + N + b)`` once, with the noise scale tied to the
row-norm constant.  Both are pure functions of (inputs, seed); caching to
disk is the pipelines' concern.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, InvalidInputError
from .graphs import AdjacencyRelation, row_normalize
from .rng import derive_rng
from .validation import as_float_matrix, check_non_negative, check_positive

DPDGC = "dpdgc"
GAP = "gap"
MLP = "mlp"

KIND_CODES = {"hop": 0, "concat": 1, "dpdgc": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

_CACHE_MAGIC = b"GDPZ"
_CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIQQBB")


@dataclass(frozen=True)
class MechanismParams:
    """Noise std s, row-norm constant c, hop count L, optional degree bound D."""

    s: float
    c: float = 1.0
    L: int = 1
    D: int | None = None

    def __post_init__(self):
        check_non_negative("s", self.s)
        check_positive("c", self.c)
        if int(self.L) < 1:
            raise InvalidInputError(f"hop count L must be >= 1, got {self.L}")
        if self.D is not None and int(self.D) < 1:
            raise InvalidInputError(f"degree bound D must be >= 1, got {self.D}")
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "D", None if self.D is None else int(self.D))


@dataclass(frozen=True)
class EmbeddingMatrix:
    values: np.ndarray
    kind: str
    hop: int | None = None
    released: bool = False

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise InvalidInputError(f"unknown embedding kind {self.kind!r}")
        object.__setattr__(self, "values", as_float_matrix(self.values, "values"))


@dataclass(frozen=True)
class EmbWeights:
    """Adjacency-side weights: rows of W normalized to c, plus a bias row."""

    W: np.ndarray
    b: np.ndarray
    c: float = 1.0

    def __post_init__(self):
        W = as_float_matrix(self.W, "W")
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if b.shape[0] != W.shape[1]:
            raise InvalidInputError(f"bias length {b.shape[0]} != width {W.shape[1]}")
        check_positive("c", self.c)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    def check_row_norms(self, rtol: float = 1e-12) -> None:
        norms = np.linalg.norm(self.W, axis=1)
        nonzero = norms > 0
        if nonzero.any() and np.max(np.abs(norms[nonzero] - self.c)) > rtol * self.c:
            worst = float(np.max(np.abs(norms[nonzero] - self.c)))
            raise ContractError(
                f"weight rows must have norm {self.c} (max deviation {worst:.3e})"
            )


@dataclass(frozen=True)
class ProjectionHead:
    """A random, frozen projection used to supervise embedding pretraining."""

    R: np.ndarray

    @classmethod
    def create(cls, hidden: int, classes: int, seed: int) -> "ProjectionHead":
        rng = derive_rng(seed, "projection-head")
        R = rng.standard_normal((hidden, classes))
        R.setflags(write=False)
        return cls(R=R)


def gaussian_perturb(matrix, s: float, seed: int) -> np.ndarray:
    """Add i.i.d. N(0, s^2) noise to every entry; s = 0 returns the input.

    The stream is keyed by (seed, purpose, shape) so reshaped inputs never
    silently reuse noise.
    """
    check_non_negative("s", s)
    matrix = as_float_matrix(matrix, "matrix")
    if s == 0:
        return matrix.copy()
    rng = derive_rng(seed, "gaussian-perturb", matrix.shape[0], matrix.shape[1])
    return matrix + s * rng.standard_normal(matrix.shape)


def _check_hop_input(H: EmbeddingMatrix) -> None:
    if H.kind != "hop":
        raise ContractError(f"aggregation hop expects a hop-kind embedding, got {H.kind!r}")
    norms = np.linalg.norm(H.values, axis=1)
    nonzero = norms > 0
    if nonzero.any() and np.max(np.abs(norms[nonzero] - 1.0)) > 1e-12:
        raise ContractError("hop input rows must be normalized to 1 (or all-zero)")


def aggregation_hop(
    H: EmbeddingMatrix, adjacency: np.ndarray, s: float, seed: int
) -> EmbeddingMatrix:
    """One noisy aggregation: row_normalize(A @ H + N(0, s^2))."""
    _check_hop_input(H)
    A = np.asarray(adjacency, dtype=np.float64)
    mixed = gaussian_perturb(A @ H.values, s, seed)
    out = row_normalize(mixed, 1.0)
    return EmbeddingMatrix(values=out, kind="hop", hop=(H.hop or 0) + 1, released=True)


def multi_hop_embedding(
    H0: EmbeddingMatrix, adjacency: np.ndarray, params: MechanismParams, seed: int
) -> EmbeddingMatrix:
    """Apply ``params.L`` aggregation hops with independent per-hop noise and
    concatenate hop 0 through hop L horizontally."""
    _check_hop_input(H0)
    hops = [H0]
    current = H0
    for level in range(params.L):
        hop_seed = int(derive_rng(seed, "hop-seed", level).integers(2**63))
        current = aggregation_hop(current, adjacency, params.s, hop_seed)
        hops.append(current)
    values = np.concatenate([h.values for h in hops], axis=1)
    return EmbeddingMatrix(values=values, kind="concat", released=True)


def decoupled_release(
    adjacency: np.ndarray,
    weights: EmbWeights,
    params: MechanismParams,
    seed: int,
    normalize: bool = True,
) -> EmbeddingMatrix:
    """Release Z = row_normalize(A @ W + N(0, (c s)^2) + b) once.

    The noise std is c * s: both the signal rows and the worst-case
    sensitivity scale linearly in the row-norm constant, so the
    noise-to-sensitivity ratio is c-invariant.  ``normalize=False`` exposes
    the pre-normalization values for diagnostics.
    """
    weights.check_row_norms()
    if abs(weights.c - params.c) > 1e-12 * max(1.0, params.c):
        raise ContractError(
            f"weights are normalized to {weights.c} but params.c is {params.c}"
        )
    A = np.asarray(adjacency, dtype=np.float64)
    pre = gaussian_perturb(A @ weights.W, params.c * params.s, seed) + weights.b
    values = row_normalize(pre, 1.0) if normalize else pre
    return EmbeddingMatrix(values=values, kind="dpdgc", released=True)


def theoretical_sensitivity(
    design: str,
    relation: AdjacencyRelation,
    degree_bound: int | None = None,
    c: float = 1.0,
) -> float:
    """Worst-case Frobenius change of the released pre-noise matrix, with the
    replaced node's row excluded.

    Multi-hop design (per hop, aggregating unit-normalized rows): an edge flip
    moves one product row by at most 1; node and kneighbor replacement move up
    to D shared-neighbor rows by 2 each, independent of k.  Decoupled design
    (rows normalized to c): one flip moves one row by c, so edge gives c,
    kneighbor gives c * sqrt(k), and node gives c * sqrt(2D) via disjoint
    in/out neighborhoods of size D.
    """
    check_positive("c", c)
    if design == GAP:
        if relation.kind == "edge":
            return 1.0
        if degree_bound is None:
            raise InvalidInputError("multi-hop sensitivity under node/kneighbor needs D")
        return 2.0 * math.sqrt(degree_bound)
    if design == DPDGC:
        if relation.kind == "edge":
            return c
        if relation.kind == "node":
            if degree_bound is None:
                raise InvalidInputError("decoupled node sensitivity needs D")
            return c * math.sqrt(2.0 * degree_bound)
        return c * math.sqrt(relation.k)
    raise InvalidInputError(f"unknown design {design!r}")


# --- embedding cache files ------------------------------------------------------


def save_embedding(emb: EmbeddingMatrix, path) -> Path:
    """Binary cache: GDPZ header then row-major little-endian doubles."""
    path = Path(path)
    n, h = emb.values.shape
    header = _CACHE_HEADER.pack(
        _CACHE_MAGIC, _CACHE_VERSION, n, h, KIND_CODES[emb.kind], int(emb.released)
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(emb.values, dtype="<f8").tobytes())
    return path


def load_embedding(path) -> EmbeddingMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise InvalidInputError(f"{path} is too short to be an embedding cache")
    magic, version, n, h, kind_code, released = _CACHE_HEADER.unpack_from(raw)
    if magic != _CACHE_MAGIC:
        raise InvalidInputError(f"{path} has bad magic {magic!r}")
    if version != _CACHE_VERSION:
        raise InvalidInputError(f"unsupported embedding cache version {version}")
    if kind_code not in KIND_NAMES:
        raise InvalidInputError(f"unknown embedding kind code {kind_code}")
    expected = _CACHE_HEADER.size + n * h * 8
    if len(raw) != expected:
        raise InvalidInputError(f"{path} has {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype="<f8", offset=_CACHE_HEADER.size).reshape(n, h).copy()
    return EmbeddingMatrix(values=values, kind=KIND_NAMES[kind_code], released=bool(released))
