"""Graph dataset model, adjacency relations, and graph statistics.

A dataset couples a directed adjacency matrix with node features and one-hot
training labels for the first ``m`` nodes.  The adjacency convention is
``adjacency[i, j] = 1`` when an edge points from ``j`` to ``i``; column ``j``
therefore holds node ``j``'s out-edges and the out-degree of ``j`` is the
``j``-th column sum.  Row ``i`` of ``adjacency @ W`` aggregates over the
sources pointing at ``i``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, SizeGuardError
from .rng import derive_rng
from .validation import as_float_matrix, check_index, check_positive

EXHAUSTIVE_NODE_LIMIT = 12


@dataclass(frozen=True)
class GraphDataset:
    """Directed graph with node features and labels on the first m nodes."""

    adjacency: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        adjacency = np.asarray(self.adjacency)
        features = as_float_matrix(self.features, "features")
        labels = as_float_matrix(self.labels, "labels")
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise InvalidInputError(f"adjacency must be square, got shape {adjacency.shape}")
        n = adjacency.shape[0]
        if features.shape[0] != n:
            raise InvalidInputError(
                f"features has {features.shape[0]} rows for {n} nodes"
            )
        if labels.shape[0] > n:
            raise InvalidInputError(
                f"labels has {labels.shape[0]} rows but the graph has {n} nodes"
            )
        object.__setattr__(self, "adjacency", adjacency)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m_labeled(self) -> int:
        return self.labels.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def num_edges(self) -> int:
        """Count of stored directed edges."""
        return int(np.count_nonzero(self.adjacency))

    def replace(self, **changes) -> "GraphDataset":
        fields = {"adjacency": self.adjacency, "features": self.features, "labels": self.labels}
        fields.update(changes)
        return GraphDataset(**fields)


@dataclass(frozen=True)
class AdjacencyRelation:
    """Which dataset-adjacency notion is in force.

    ``edge``: one adjacency entry flips, features and labels untouched.
    ``node``: one node's features, label, and full adjacency row/column move.
    ``kneighbor``: like node, but at most k entries flip in the replaced
    node's row and at most k in its column.  k = n recovers node semantics.
    """

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("edge", "node", "kneighbor"):
            raise InvalidInputError(f"unknown adjacency relation kind {self.kind!r}")
        if self.kind == "kneighbor":
            if self.k is None or int(self.k) < 0:
                raise InvalidInputError("kneighbor relation requires k >= 0")
            object.__setattr__(self, "k", int(self.k))
        elif self.k is not None:
            raise InvalidInputError(f"relation {self.kind!r} does not take k")

    @classmethod
    def edge(cls) -> "AdjacencyRelation":
        return cls("edge")

    @classmethod
    def node(cls) -> "AdjacencyRelation":
        return cls("node")

    @classmethod
    def kneighbor(cls, k: int) -> "AdjacencyRelation":
        return cls("kneighbor", k)

    @classmethod
    def parse(cls, text: str, k: int | None = None) -> "AdjacencyRelation":
        text = text.lower()
        if text in ("edge", "e"):
            return cls.edge()
        if text in ("node", "n"):
            return cls.node()
        if text in ("kneighbor", "nk", "k-neighbor"):
            if k is None:
                raise InvalidInputError("kneighbor relation requires k")
            return cls.kneighbor(k)
        raise InvalidInputError(f"unknown relation {text!r}")


@dataclass(frozen=True)
class DegreeBound:
    """Upper bound on out-degree (adjacency column sums)."""

    D: int

    def __post_init__(self):
        if int(self.D) < 1:
            raise InvalidInputError(f"degree bound must be >= 1, got {self.D}")
        object.__setattr__(self, "D", int(self.D))


def validate(dataset: GraphDataset) -> list[str]:
    """Return a list of invariant violations; empty iff the dataset is valid.

    Diagnostic only: never raises for content problems.
    """
    violations: list[str] = []
    adjacency = np.asarray(dataset.adjacency, dtype=np.float64)
    n = dataset.n

    nonbinary = np.argwhere((adjacency != 0) & (adjacency != 1))
    for i, j in nonbinary[:10]:
        violations.append(f"adjacency entry ({i}, {j}) is not binary")

    diag = np.flatnonzero(np.diagonal(adjacency))
    for i in diag:
        violations.append(f"adjacency diagonal is nonzero at index {i} (self-loop)")

    labels = dataset.labels
    is_onehot = np.all((labels == 0.0) | (labels == 1.0), axis=1) & (labels.sum(axis=1) == 1.0)
    for i in np.flatnonzero(~is_onehot):
        violations.append(f"labels row {i} is not one-hot")

    m = dataset.m_labeled
    if not 0 < m <= n:
        violations.append(f"labeled count m={m} violates 0 < m <= n={n}")

    return violations


def subsample_out_degree(dataset: GraphDataset, bound: DegreeBound, seed: int) -> GraphDataset:
    """Randomly drop edges from over-full columns until every out-degree <= D.

    Columns already within the bound are untouched; removal is uniform
    without replacement, independently per column, deterministic given seed.
    """
    adjacency = np.asarray(dataset.adjacency).copy()
    rng = derive_rng(seed, "degree-subsample")
    for j in range(dataset.n):
        rows = np.flatnonzero(adjacency[:, j])
        if rows.size > bound.D:
            keep = rng.choice(rows, size=bound.D, replace=False)
            adjacency[:, j] = 0
            adjacency[keep, j] = 1
    return dataset.replace(adjacency=adjacency)


def edge_density(dataset: GraphDataset) -> float:
    """2|E| / (n (n-1)) with |E| counting stored directed edges."""
    n = dataset.n
    if n < 2:
        raise InvalidInputError(f"edge density needs n >= 2, got n={n}")
    return 2.0 * dataset.num_edges / (n * (n - 1))


def homophily(dataset: GraphDataset) -> float:
    """Class-insensitive edge homophily in [0, 1].

    Per class c, the share of edges joining two class-c endpoints is compared
    to the class's node share; positive excesses are averaged over C - 1.
    Edges with an unlabeled endpoint are excluded from both the numerator and
    the edge count, and a graph with no counted edges scores 0.
    """
    C = dataset.num_classes
    if C < 2:
        raise InvalidInputError(f"homophily needs at least 2 classes, got {C}")
    n = dataset.n
    m = dataset.m_labeled
    adjacency = np.asarray(dataset.adjacency)

    dst, src = np.nonzero(adjacency)
    both_labeled = (dst < m) & (src < m)
    dst, src = dst[both_labeled], src[both_labeled]
    num_edges = dst.size
    if num_edges == 0:
        return 0.0

    labels = dataset.labels
    class_counts = labels.sum(axis=0)
    # h_c: fraction of counted edges whose two endpoints are both in class c
    intra = (labels[src] * labels[dst]).sum(axis=0)
    h = intra / num_edges
    excess = np.maximum(0.0, h - class_counts / n)
    return float(excess.sum() / (C - 1))


def row_normalize(matrix, target: float = 1.0) -> np.ndarray:
    """Scale every nonzero row to Euclidean norm ``target``; zero rows stay zero.

    Rows whose norm already sits within rounding error of the target are left
    untouched, which makes the operation exactly idempotent.
    """
    check_positive("target", target)
    matrix = as_float_matrix(matrix, "matrix")
    norms = np.linalg.norm(matrix, axis=1)
    scale = np.zeros_like(norms)
    nonzero = norms > 0
    scale[nonzero] = target / norms[nonzero]
    scale[np.abs(norms - target) <= 32.0 * np.finfo(np.float64).eps * target] = 1.0
    return matrix * scale[:, None]


def _resample_features_labels(dataset: GraphDataset, r: int, rng: np.random.Generator):
    """Fresh X_r (random direction, original norm) and random one-hot Y_r."""
    features = dataset.features.copy()
    norm = np.linalg.norm(features[r])
    if norm > 0:
        direction = rng.standard_normal(dataset.num_features)
        dnorm = np.linalg.norm(direction)
        features[r] = direction * (norm / dnorm) if dnorm > 0 else 0.0
    labels = dataset.labels.copy()
    new_class = int(rng.integers(dataset.num_classes))
    labels[r] = 0.0
    labels[r, new_class] = 1.0
    return features, labels


def sample_adjacent(
    dataset: GraphDataset, relation: AdjacencyRelation, r: int, seed: int
) -> GraphDataset:
    """Draw one dataset adjacent to ``dataset`` under ``relation`` at node r.

    Deterministic given seed.  For the edge relation only the topology moves
    (a single uniformly chosen off-diagonal flip); node and kneighbor also
    replace X_r and Y_r, which requires r to be a labeled node.
    """
    n = dataset.n
    check_index("r", r, n)
    rng = derive_rng(seed, "sample-adjacent", relation.kind, r)
    adjacency = np.asarray(dataset.adjacency).copy()

    if relation.kind == "edge":
        flat = rng.integers(n * (n - 1))
        i, off = divmod(int(flat), n - 1)
        j = off if off < i else off + 1
        adjacency[i, j] = 1 - adjacency[i, j]
        return dataset.replace(adjacency=adjacency)

    if r >= dataset.m_labeled:
        raise InvalidInputError(
            f"relation {relation.kind!r} replaces labels: r={r} must be a labeled node"
        )
    features, labels = _resample_features_labels(dataset, r, rng)

    others = np.array([i for i in range(n) if i != r])
    if relation.kind == "node":
        adjacency[r, others] = rng.integers(0, 2, size=n - 1)
        adjacency[others, r] = rng.integers(0, 2, size=n - 1)
    else:
        limit = min(relation.k, n - 1)
        t_row = int(rng.integers(limit + 1))
        if t_row:
            cols = rng.choice(others, size=t_row, replace=False)
            adjacency[r, cols] = 1 - adjacency[r, cols]
        t_col = int(rng.integers(limit + 1))
        if t_col:
            rows = rng.choice(others, size=t_col, replace=False)
            adjacency[rows, r] = 1 - adjacency[rows, r]
    return dataset.replace(adjacency=adjacency, features=features, labels=labels)


def iter_adjacent_topologies(adjacency: np.ndarray, relation: AdjacencyRelation, r: int):
    """Yield every adjacency matrix reachable under the relation's topology clause.

    Edge: one flip among all off-diagonal entries (the replaced-node index is
    irrelevant).  KNeighbor(k): all combinations of <= k flips in row r and
    <= k flips in column r, excluding (r, r).  Node: every rewiring of row r
    and column r.  Exhaustive by construction; callers guard sizes.
    """
    adjacency = np.asarray(adjacency)
    n = adjacency.shape[0]

    if relation.kind == "edge":
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                out = adjacency.copy()
                out[i, j] = 1 - out[i, j]
                yield out
        return

    check_index("r", r, n)
    others = [i for i in range(n) if i != r]
    limit = n - 1 if relation.kind == "node" else min(relation.k, n - 1)

    def flip_sets():
        for size in range(limit + 1):
            yield from itertools.combinations(others, size)

    for row_flips in flip_sets():
        for col_flips in flip_sets():
            out = adjacency.copy()
            for j in row_flips:
                out[r, j] = 1 - out[r, j]
            for i in col_flips:
                out[i, r] = 1 - out[i, r]
            yield out


@dataclass(frozen=True)
class EnumeratedAdjacency:
    datasets: tuple
    truncated: bool


def count_adjacent_topologies(n: int, relation: AdjacencyRelation) -> int:
    if relation.kind == "edge":
        return n * (n - 1)
    limit = n - 1 if relation.kind == "node" else min(relation.k, n - 1)
    per_side = sum(math.comb(n - 1, i) for i in range(limit + 1))
    return per_side * per_side


def enumerate_adjacent(
    dataset: GraphDataset,
    relation: AdjacencyRelation,
    r: int,
    max_count: int | None = None,
) -> EnumeratedAdjacency:
    """Materialize every topology-adjacent dataset, up to ``max_count``.

    Topology-only: features and labels are carried over unchanged (feature
    replacement is the caller's concern).  Refuses instances with n beyond
    the exhaustive guard.
    """
    n = dataset.n
    if n > EXHAUSTIVE_NODE_LIMIT:
        raise SizeGuardError(
            f"exhaustive enumeration guarded at n <= {EXHAUSTIVE_NODE_LIMIT}, got n={n}"
        )
    out = []
    truncated = False
    for adj in iter_adjacent_topologies(dataset.adjacency, relation, r):
        if max_count is not None and len(out) >= max_count:
            truncated = True
            break
        out.append(dataset.replace(adjacency=adj))
    return EnumeratedAdjacency(datasets=tuple(out), truncated=truncated)


def relabel_nodes(dataset: GraphDataset, order: np.ndarray) -> GraphDataset:
    """Permute node indices so new node i is old node ``order[i]``.

    Old labeled nodes listed in ``order`` before any unlabeled one keep their
    labels; the labeled set must map to a prefix of the new ordering.
    """
    order = np.asarray(order, dtype=np.int64)
    n = dataset.n
    if sorted(order.tolist()) != list(range(n)):
        raise InvalidInputError("order must be a permutation of range(n)")
    labeled = order < dataset.m_labeled
    new_m = int(labeled.sum())
    if not labeled[:new_m].all():
        raise InvalidInputError("labeled nodes must form a prefix after relabeling")
    adjacency = np.asarray(dataset.adjacency)[np.ix_(order, order)]
    features = dataset.features[order]
    labels = dataset.labels[order[:new_m]]
    return GraphDataset(adjacency=adjacency, features=features, labels=labels)


# --- on-disk dataset format ---------------------------------------------------
#
# A dataset directory holds meta.json, edges.csv (header "src,dst"),
# features.csv (n rows of F comma-separated decimals, no header), and
# labels.csv (header "node,class", one row per labeled node).  All text is
# UTF-8 with LF line endings; floats are written in shortest round-trip form.


def save_dataset(dataset: GraphDataset, path, extra_meta: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    meta = {
        "n": dataset.n,
        "m_labeled": dataset.m_labeled,
        "F": dataset.num_features,
        "C": dataset.num_classes,
        "directed": True,
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(path / "meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")

    dst, src = np.nonzero(np.asarray(dataset.adjacency))
    order = np.lexsort((dst, src))
    with open(path / "edges.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("src,dst\n")
        for s, d in zip(src[order], dst[order]):
            fh.write(f"{s},{d}\n")

    with open(path / "features.csv", "w", encoding="utf-8", newline="\n") as fh:
        for row in dataset.features:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")

    classes = np.argmax(dataset.labels, axis=1)
    with open(path / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node,class\n")
        for i, c in enumerate(classes):
            fh.write(f"{i},{c}\n")
    return path


def load_dataset(path) -> GraphDataset:
    path = Path(path)
    with open(path / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    n, m, F, C = meta["n"], meta["m_labeled"], meta["F"], meta["C"]

    adjacency = np.zeros((n, n), dtype=np.int8)
    with open(path / "edges.csv", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            adjacency[int(row["dst"]), int(row["src"])] = 1

    features = np.zeros((n, F), dtype=np.float64)
    with open(path / "features.csv", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            features[i] = [float(v) for v in line.split(",")]

    labels = np.zeros((m, C), dtype=np.float64)
    with open(path / "labels.csv", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            labels[int(row["node"]), int(row["class"])] = 1.0

    return GraphDataset(adjacency=adjacency, features=features, labels=labels)


def load_meta(path) -> dict:
    with open(Path(path) / "meta.json", encoding="utf-8") as fh:
        return json.load(fh)
