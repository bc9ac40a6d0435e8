"""Trainable graph models with end-to-end privacy reports.

Three estimators share one surface: ``fit(dataset)`` trains under the
configured adjacency relation and noise levels (or calibrates them from a
target (epsilon, delta)), caches the released embedding to disk, and attaches
a ``report_`` describing the total guarantee; ``predict_proba_node`` serves
cached, noise-free inference for unlabeled nodes.  They follow scikit-learn
conventions (constructor stores hyperparameters verbatim, fitted state gets a
trailing underscore, ``get_params`` works for grid search and cloning).
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import nn
from .accounting import (
    RdpCurve,
    compose,
    gaussian_curve,
    gdp_budget,
    mechanism_coefficient,
    solve_total_slope,
)
from .errors import ConfigurationError, InvalidInputError, InvalidQueryError
from .graphs import (
    AdjacencyRelation,
    DegreeBound,
    GraphDataset,
    row_normalize,
    subsample_out_degree,
    validate,
)
from .mechanisms import (
    DPDGC,
    GAP,
    MLP,
    EmbWeights,
    EmbeddingMatrix,
    MechanismParams,
    ProjectionHead,
    decoupled_release,
    load_embedding,
    multi_hop_embedding,
    save_embedding,
    theoretical_sensitivity,
)
from .rng import derive_rng

CACHE_ENV_VAR = "GDPKIT_CACHE_DIR"


# --- transductive splits ---------------------------------------------------------


@dataclass(frozen=True)
class Split:
    """Validation/test node indices plus ground truth for scoring."""

    val_indices: np.ndarray
    test_indices: np.ndarray
    y_true: np.ndarray  # class index per node, -1 where unknown


def make_transductive_split(
    full: GraphDataset, seed: int, fractions=(0.5, 0.25, 0.25)
) -> tuple[GraphDataset, Split]:
    """Split a fully labeled dataset into a transductive instance.

    Nodes are permuted so a seeded train subset forms the labeled prefix;
    validation and test nodes keep their ground truth in the split object but
    carry no labels in the returned dataset.
    """
    if full.m_labeled != full.n:
        raise InvalidInputError("splitting requires a fully labeled dataset")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError("fractions must be three shares summing to 1")
    n = full.n
    rng = derive_rng(seed, "transductive-split")
    order = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n_train < 1 or n_val < 1 or n_train + n_val >= n:
        raise InvalidInputError("split fractions leave an empty part")

    adjacency = np.asarray(full.adjacency)[np.ix_(order, order)]
    features = full.features[order]
    labels = full.labels[order[:n_train]]
    dataset = GraphDataset(adjacency=adjacency, features=features, labels=labels)

    y_true = np.argmax(full.labels, axis=1)[order]
    split = Split(
        val_indices=np.arange(n_train, n_train + n_val),
        test_indices=np.arange(n_train + n_val, n),
        y_true=y_true,
    )
    return dataset, split


def evaluate(model, dataset_or_split, split: Split | None = None, part: str = "test") -> dict:
    """Top-1 accuracy with a per-class breakdown over a split's nodes."""
    split = dataset_or_split if split is None else split
    indices = split.test_indices if part == "test" else split.val_indices
    if len(indices) == 0:
        raise InvalidInputError(f"{part} split is empty")
    probs = model.predict_proba_nodes(indices)
    predicted = np.argmax(probs, axis=1)
    truth = split.y_true[indices]
    correct = predicted == truth
    per_class = {}
    for c in np.unique(truth):
        mask = truth == c
        per_class[int(c)] = float(correct[mask].mean())
    return {"accuracy": float(correct.mean()), "per_class": per_class, "count": len(indices)}


def confidence_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and normal-approximation 95 percent half-width over seeds."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    half = 1.96 * float(values.std(ddof=1)) / math.sqrt(values.size)
    return mean, half


# --- noise resolution ------------------------------------------------------------


@dataclass(frozen=True)
class ResolvedNoise:
    """Concrete noise levels for one run, after any budget calibration."""

    noise_std: float
    nu_pretrain: float
    nu_classifier: float
    slopes: dict


def _active_components(model: str, relation: AdjacencyRelation, mech_coeff: float) -> list[str]:
    if model == MLP:
        return ["classifier"]
    if model == GAP:
        if relation.kind == "edge":
            return ["mechanism"]
        return ["pretrain", "mechanism", "classifier"]
    # decoupled design: the embedding is always DP-trained
    active = ["pretrain"]
    if mech_coeff > 0:
        active.append("mechanism")
    if relation.kind != "edge":
        active.append("classifier")
    return active


def resolve_noise(
    model: str,
    relation: AdjacencyRelation,
    params: MechanismParams,
    epochs: int,
    epsilon: float | None,
    delta: float,
    budget_split=None,
    noise_std: float | None = None,
    nu_pretrain: float | None = None,
    nu_classifier: float | None = None,
) -> ResolvedNoise:
    """Either take explicit noise levels or calibrate them from a target.

    Calibration solves for the total linear RDP slope that converts to the
    target epsilon, then splits it across the active components (equal shares
    unless ``budget_split`` gives weights for pretrain/mechanism/classifier).
    The assembled report then round-trips to the target exactly, up to the
    conversion optimizer's tolerance.
    """
    coeff = mechanism_coefficient(model, relation, params)
    if epsilon is None:
        return ResolvedNoise(
            noise_std=float(noise_std if noise_std is not None else 0.0),
            nu_pretrain=float(nu_pretrain if nu_pretrain is not None else 0.0),
            nu_classifier=float(nu_classifier if nu_classifier is not None else 0.0),
            slopes={},
        )

    total = solve_total_slope(epsilon, delta)
    active = _active_components(model, relation, coeff)
    weights = {"pretrain": 1.0, "mechanism": 1.0, "classifier": 1.0}
    if budget_split is not None:
        names = ("pretrain", "mechanism", "classifier")
        weights = dict(zip(names, (float(w) for w in budget_split)))
    mass = sum(weights[name] for name in active)
    if mass <= 0:
        raise ConfigurationError("budget split has no mass on active components")
    slopes = {name: total * weights[name] / mass for name in active}

    def nu_for(slope: float) -> float:
        return math.sqrt(epochs / (2.0 * slope))

    std = 0.0
    if "mechanism" in slopes and coeff > 0:
        std = math.sqrt(coeff / (2.0 * slopes["mechanism"]))
    return ResolvedNoise(
        noise_std=std,
        nu_pretrain=nu_for(slopes["pretrain"]) if "pretrain" in slopes else 0.0,
        nu_classifier=nu_for(slopes["classifier"]) if "classifier" in slopes else 0.0,
        slopes=slopes,
    )


# --- estimator base --------------------------------------------------------------


class GdpModelBase(BaseEstimator):
    """Shared relation handling, caching, and the transductive predict contract."""

    _model_name: str = ""

    def _relation(self) -> AdjacencyRelation:
        return AdjacencyRelation.parse(self.relation, getattr(self, "k", None))

    def _check_config(self, relation: AdjacencyRelation) -> None:
        needs_bound = (
            relation.kind == "node"
            or (self._model_name == GAP and relation.kind == "kneighbor")
        )
        if needs_bound and self.degree_bound is None:
            raise ConfigurationError(
                f"{self._model_name} under {relation.kind} relation needs degree_bound"
            )

    def _validated(self, dataset: GraphDataset) -> GraphDataset:
        problems = validate(dataset)
        if problems:
            raise InvalidInputError("dataset fails validation: " + "; ".join(problems[:3]))
        return dataset

    def _cache_dir(self) -> Path:
        # the environment variable overrides any configured cache root
        if os.environ.get(CACHE_ENV_VAR):
            path = Path(os.environ[CACHE_ENV_VAR])
        elif getattr(self, "cache_dir", None):
            path = Path(self.cache_dir)
        else:
            path = Path(tempfile.mkdtemp(prefix="gdpkit-cache-"))
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _store_dataset(self, dataset: GraphDataset) -> None:
        self.n_ = dataset.n
        self.m_labeled_ = dataset.m_labeled
        self.classes_ = np.arange(dataset.num_classes)
        self.features_ = dataset.features.copy()
        self.labels_ = dataset.labels.copy()

    def _check_unlabeled(self, v: int) -> int:
        v = int(v)
        if not 0 <= v < self.n_:
            raise InvalidInputError(f"node {v} out of range [0, {self.n_})")
        if v < self.m_labeled_:
            raise InvalidQueryError(
                f"node {v} is labeled; the transductive contract serves predictions "
                "only for unlabeled nodes"
            )
        return v

    def predict_proba_node(self, v: int) -> np.ndarray:
        """Class distribution for one unlabeled node, from cached state only."""
        v = self._check_unlabeled(v)
        return self._proba_rows(np.array([v]))[0]

    def predict_proba_nodes(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        for v in indices:
            self._check_unlabeled(int(v))
        return self._proba_rows(indices)

    def predict(self, indices) -> np.ndarray:
        return np.argmax(self.predict_proba_nodes(indices), axis=1)

    def _split_val_accuracy(self, split: Split | None, probs_for_indices) -> float | None:
        if split is None or len(split.val_indices) == 0:
            return None
        probs = probs_for_indices(split.val_indices)
        truth = split.y_true[split.val_indices]
        return float((np.argmax(probs, axis=1) == truth).mean())

    def _proba_rows(self, indices: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


def _epoch_metrics_hook(estimator, stage: str):
    history = estimator.history_

    def hook(epoch: int, loss: float, val_acc: float | None):
        history.append(
            {"stage": stage, "epoch": epoch, "train_loss": loss, "val_acc": val_acc}
        )

    return hook


# --- feature-only baseline -------------------------------------------------------


class MlpClassifier(GdpModelBase):
    """Three-layer network on node features; topology is never read."""

    _model_name = MLP

    def __init__(
        self,
        relation: str = "node",
        k: int | None = None,
        degree_bound: int | None = None,
        epsilon: float | None = None,
        delta: float = 1e-5,
        nu_classifier: float | None = None,
        budget_split=None,
        hidden_dim: int = 64,
        epochs: int = 100,
        learning_rate: float = 1e-3,
        clip_norm: float = 1.0,
        dropout: float = 0.0,
        seed: int = 0,
        cache_dir=None,
    ):
        self.relation = relation
        self.k = k
        self.degree_bound = degree_bound
        self.epsilon = epsilon
        self.delta = delta
        self.nu_classifier = nu_classifier
        self.budget_split = budget_split
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.dropout = dropout
        self.seed = seed
        self.cache_dir = cache_dir

    def fit(self, dataset: GraphDataset, split: Split | None = None) -> "MlpClassifier":
        dataset = self._validated(dataset)
        relation = self._relation()
        self._store_dataset(dataset)
        self.history_ = []

        params = MechanismParams(s=0.0)
        resolved = resolve_noise(
            MLP,
            relation,
            params,
            self.epochs,
            self.epsilon,
            self.delta,
            self.budget_split,
            nu_classifier=self.nu_classifier,
        )
        self.resolved_ = resolved
        private = resolved.nu_classifier > 0
        config = nn.DpOptimizerConfig(
            clip_norm=self.clip_norm if private else math.inf,
            noise_multiplier=resolved.nu_classifier,
            group_size=1,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            dropout=0.0 if private else self.dropout,
        )

        widths = [dataset.num_features, self.hidden_dim, self.hidden_dim, dataset.num_classes]
        model = nn.init_mlp(widths, seed=int(derive_rng(self.seed, "mlp-model").integers(2**63)))
        hook = _epoch_metrics_hook(self, "classifier")

        X = dataset.features[: dataset.m_labeled]
        Y = dataset.labels

        def on_epoch(current, t, loss):
            val_acc = self._split_val_accuracy(
                split, lambda idx: nn.predict_proba(current, self.features_[idx])
            )
            hook(t, loss, val_acc)

        model, curve, _ = nn.train(model, X, Y, config, seed=self.seed, epoch_hook=on_epoch)
        self.net_ = model

        self.report_ = gdp_budget(
            MLP,
            relation,
            params,
            gamma1=RdpCurve.zero(),
            gamma2=curve,
            delta=self.delta,
            dataset=dataset,
            ledger=(("classifier-optimizer", curve),),
        )
        return self

    def _val_accuracy(self, model, split):
        if split is None or len(split.val_indices) == 0:
            return None
        probs = nn.predict_proba(model, self.features_[split.val_indices])
        return float((np.argmax(probs, axis=1) == split.y_true[split.val_indices]).mean())

    def _proba_rows(self, indices: np.ndarray) -> np.ndarray:
        return nn.predict_proba(self.net_, self.features_[indices])


# --- multi-hop aggregation model ---------------------------------------------------


class GapClassifier(GdpModelBase):
    """Encoder, L noisy aggregation hops over the graph, then a classifier.

    Node and kneighbor runs subsample the graph to the degree bound first and
    train both networks with the DP optimizer (group size 1); edge runs train
    them with standard optimizers and spend privacy only in the hops.
    """

    _model_name = GAP

    def __init__(
        self,
        relation: str = "node",
        k: int | None = None,
        degree_bound: int | None = None,
        epsilon: float | None = None,
        delta: float = 1e-5,
        noise_std: float | None = None,
        nu_pretrain: float | None = None,
        nu_classifier: float | None = None,
        budget_split=None,
        hidden_dim: int = 64,
        hops: int = 2,
        epochs: int = 100,
        learning_rate: float = 1e-3,
        clip_norm: float = 1.0,
        dropout: float = 0.0,
        seed: int = 0,
        cache_dir=None,
    ):
        self.relation = relation
        self.k = k
        self.degree_bound = degree_bound
        self.epsilon = epsilon
        self.delta = delta
        self.noise_std = noise_std
        self.nu_pretrain = nu_pretrain
        self.nu_classifier = nu_classifier
        self.budget_split = budget_split
        self.hidden_dim = hidden_dim
        self.hops = hops
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.dropout = dropout
        self.seed = seed
        self.cache_dir = cache_dir

    def fit(self, dataset: GraphDataset, split: Split | None = None) -> "GapClassifier":
        dataset = self._validated(dataset)
        relation = self._relation()
        self._check_config(relation)
        self._store_dataset(dataset)
        self.history_ = []
        is_edge = relation.kind == "edge"

        if not is_edge:
            dataset = subsample_out_degree(
                dataset, DegreeBound(self.degree_bound), seed=self.seed
            )

        params = MechanismParams(
            s=1.0 if self.noise_std is None else self.noise_std,
            L=self.hops,
            D=self.degree_bound,
        )
        resolved = resolve_noise(
            GAP,
            relation,
            params,
            self.epochs,
            self.epsilon,
            self.delta,
            self.budget_split,
            noise_std=self.noise_std,
            nu_pretrain=self.nu_pretrain,
            nu_classifier=self.nu_classifier,
        )
        self.resolved_ = resolved
        params = MechanismParams(s=resolved.noise_std, L=self.hops, D=self.degree_bound)

        # encoder pretraining through an auxiliary head, discarded afterwards
        enc_widths = [
            dataset.num_features,
            self.hidden_dim,
            self.hidden_dim,
            dataset.num_classes,
        ]
        encoder = nn.init_mlp(
            enc_widths, seed=int(derive_rng(self.seed, "gap-encoder").integers(2**63))
        )
        enc_config = self._optimizer_config(resolved.nu_pretrain, private=not is_edge)
        X = dataset.features[: dataset.m_labeled]
        Y = dataset.labels
        encoder, gamma1, enc_losses = nn.train(encoder, X, Y, enc_config, seed=self.seed)
        hook = _epoch_metrics_hook(self, "encoder")
        for t, loss in enumerate(enc_losses):
            hook(t, loss, None)
        if is_edge:
            gamma1 = RdpCurve.zero()

        H = nn.hidden_features(encoder, dataset.features, layers=2)
        H0 = EmbeddingMatrix(values=row_normalize(H, 1.0), kind="hop", hop=0)
        Z = multi_hop_embedding(H0, np.asarray(dataset.adjacency, dtype=np.float64), params, self.seed)

        cache = self._cache_dir() / "embedding.gdpz"
        save_embedding(Z, cache)
        self.cache_path_ = cache
        self.embedding_ = load_embedding(cache).values

        clf_widths = [self.embedding_.shape[1], self.hidden_dim, dataset.num_classes]
        classifier = nn.init_mlp(
            clf_widths, seed=int(derive_rng(self.seed, "gap-classifier").integers(2**63))
        )
        clf_config = self._optimizer_config(resolved.nu_classifier, private=not is_edge)
        Zl = self.embedding_[: dataset.m_labeled]
        hook = _epoch_metrics_hook(self, "classifier")

        def on_epoch(current, t, loss):
            val_acc = self._split_val_accuracy(
                split, lambda idx: nn.predict_proba(current, self.embedding_[idx])
            )
            hook(t, loss, val_acc)

        classifier, gamma2, _ = nn.train(
            classifier, Zl, Y, clf_config, seed=self.seed + 1, epoch_hook=on_epoch
        )
        self.net_ = classifier
        if is_edge:
            gamma2 = RdpCurve.zero()

        per_hop = gaussian_curve(
            theoretical_sensitivity(GAP, relation, self.degree_bound), params.s
        ) if params.s > 0 else RdpCurve.linear(math.inf, provenance=("non-private",))
        hop_entries = tuple((f"aggregation-hop-{i}", per_hop) for i in range(self.hops))
        ledger = hop_entries if is_edge else (
            ("pretrain-optimizer", gamma1),
            *hop_entries,
            ("classifier-optimizer", gamma2),
        )
        self.report_ = gdp_budget(
            GAP,
            relation,
            params,
            gamma1=gamma1,
            gamma2=gamma2,
            delta=self.delta,
            dataset=dataset,
            ledger=ledger,
        )
        return self

    def _optimizer_config(self, nu: float, private: bool) -> nn.DpOptimizerConfig:
        return nn.DpOptimizerConfig(
            clip_norm=self.clip_norm if private and nu > 0 else math.inf,
            noise_multiplier=nu if private else 0.0,
            group_size=1,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            dropout=0.0 if private and nu > 0 else self.dropout,
        )

    def _proba_rows(self, indices: np.ndarray) -> np.ndarray:
        return nn.predict_proba(self.net_, self.embedding_[indices])


# --- decoupled-convolution model ---------------------------------------------------


class _EmbeddingPretrainer:
    """DP training of the adjacency-side weights through a frozen projection.

    Parameters are a per-node weight matrix (rows kept at norm c after every
    step) and a bias row; sample i's logits are selu(A_i W + b) R, so sample
    i's weight gradient is the outer product of its adjacency row with the
    pre-activation gradient, and the clipped sums stay closed-form.
    """

    def __init__(self, n, hidden, classes, c, seed):
        self.c = c
        rng_seed = int(derive_rng(seed, "emb-init").integers(2**63))
        W = nn.init_mlp([n, hidden], rng_seed).weights[0]
        self.W = row_normalize(W, c)
        self.b = np.zeros(hidden)
        self.head = ProjectionHead.create(hidden, classes, seed)

    def loss(self, A_lab, Y) -> float:
        U = A_lab @ self.W + self.b
        logits = nn.selu(U) @ self.head.R
        losses, _ = nn.softmax_cross_entropy(logits, Y)
        return float(losses.mean())

    def step(self, A_lab, Y, config: nn.DpOptimizerConfig, seed: int) -> float:
        U = A_lab @ self.W + self.b
        G = nn.selu(U)
        logits = G @ self.head.R
        losses, dlogits = nn.softmax_cross_entropy(logits, Y)
        dU = (dlogits @ self.head.R.T) * nn.selu_grad(U)

        # per-sample gradient norms without materializing the outer products
        row_sq = np.einsum("bi,bi->b", A_lab, A_lab)
        du_sq = np.einsum("bh,bh->b", dU, dU)
        norms = np.sqrt((row_sq + 1.0) * du_sq)
        if math.isinf(config.clip_norm):
            scales = np.ones_like(norms)
        else:
            scales = np.ones_like(norms)
            over = norms > config.clip_norm
            scales[over] = config.clip_norm / norms[over]

        scaled = dU * scales[:, None]
        grad_W = A_lab.T @ scaled
        grad_b = scaled.sum(axis=0)
        if config.noise_multiplier > 0:
            sigma = config.noise_multiplier * config.step_sensitivity
            noise_W, noise_b = nn.step_noise([self.W.shape, self.b.shape], sigma, seed)
            grad_W = grad_W + noise_W
            grad_b = grad_b + noise_b

        B = A_lab.shape[0]
        lr = config.learning_rate
        self.W = row_normalize(self.W - lr * grad_W / B, self.c)
        self.b = self.b - lr * grad_b / B
        return float(losses.mean())


class _CombinedHead:
    """One-layer feature encoder concatenated with the released embedding,
    followed by a two-layer classifier; trained end to end."""

    def __init__(self, num_features, emb_width, hidden, classes, seed):
        s1 = int(derive_rng(seed, "head-encoder").integers(2**63))
        s2 = int(derive_rng(seed, "head-classifier").integers(2**63))
        self.encoder = nn.init_mlp([num_features, hidden], s1)
        self.classifier = nn.init_mlp([hidden + emb_width, hidden, classes], s2)

    def params(self) -> list:
        return self.encoder.params() + self.classifier.params()

    def set_params_list(self, params: list) -> None:
        self.encoder = self.encoder.with_params(params[:2])
        self.classifier = self.classifier.with_params(params[2:])

    def forward(self, X, Z):
        U0 = X @ self.encoder.weights[0] + self.encoder.biases[0]
        E = nn.selu(U0)
        cat = np.concatenate([E, Z], axis=1)
        W1, b1 = self.classifier.weights[0], self.classifier.biases[0]
        W2, b2 = self.classifier.weights[1], self.classifier.biases[1]
        U1 = cat @ W1 + b1
        G1 = nn.selu(U1)
        logits = G1 @ W2 + b2
        return logits, (U0, E, cat, U1, G1)

    def predict_proba(self, X, Z) -> np.ndarray:
        logits, _ = self.forward(X, Z)
        return nn.softmax(logits)

    def per_sample_grads(self, X, Z, Y):
        logits, (U0, E, cat, U1, G1) = self.forward(X, Z)
        losses, dlogits = nn.softmax_cross_entropy(logits, Y)
        W1 = self.classifier.weights[0]
        W2 = self.classifier.weights[1]
        hidden = E.shape[1]

        dW2 = np.einsum("bi,bo->bio", G1, dlogits)
        db2 = dlogits
        dG1 = dlogits @ W2.T
        dU1 = dG1 * nn.selu_grad(U1)
        dW1 = np.einsum("bi,bo->bio", cat, dU1)
        db1 = dU1
        dcat = dU1 @ W1.T
        dU0 = dcat[:, :hidden] * nn.selu_grad(U0)
        dW0 = np.einsum("bi,bo->bio", X, dU0)
        db0 = dU0
        return [dW0, db0, dW1, db1, dW2, db2], losses


class DpdgcClassifier(GdpModelBase):
    """Decoupled private graph convolution with a feature branch.

    The adjacency-side weights are DP-pretrained with the relation-specific
    group size (D+1 for node, k+1 for kneighbor, 1 for edge), the embedding is
    released once with noise std c * s, and the downstream head trains on the
    concatenation of an encoded feature branch and the cached embedding.
    Kneighbor runs never subsample the graph; node runs bound the out-degree
    first.
    """

    _model_name = DPDGC

    def __init__(
        self,
        relation: str = "node",
        k: int | None = None,
        degree_bound: int | None = None,
        epsilon: float | None = None,
        delta: float = 1e-5,
        noise_std: float | None = None,
        nu_pretrain: float | None = None,
        nu_classifier: float | None = None,
        budget_split=None,
        hidden_dim: int = 64,
        row_norm_c: float = 1.0,
        epochs: int = 100,
        learning_rate: float = 1e-3,
        clip_norm: float = 1.0,
        dropout: float = 0.0,
        seed: int = 0,
        cache_dir=None,
    ):
        self.relation = relation
        self.k = k
        self.degree_bound = degree_bound
        self.epsilon = epsilon
        self.delta = delta
        self.noise_std = noise_std
        self.nu_pretrain = nu_pretrain
        self.nu_classifier = nu_classifier
        self.budget_split = budget_split
        self.hidden_dim = hidden_dim
        self.row_norm_c = row_norm_c
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.dropout = dropout
        self.seed = seed
        self.cache_dir = cache_dir

    def _group_size(self, relation: AdjacencyRelation) -> int:
        if relation.kind == "node":
            return self.degree_bound + 1
        if relation.kind == "kneighbor":
            return relation.k + 1
        return 1

    def fit(self, dataset: GraphDataset, split: Split | None = None) -> "DpdgcClassifier":
        dataset = self._validated(dataset)
        relation = self._relation()
        self._check_config(relation)
        self._store_dataset(dataset)
        self.history_ = []
        is_edge = relation.kind == "edge"

        if relation.kind == "node":
            dataset = subsample_out_degree(
                dataset, DegreeBound(self.degree_bound), seed=self.seed
            )

        params = MechanismParams(
            s=1.0 if self.noise_std is None else self.noise_std,
            c=self.row_norm_c,
            D=self.degree_bound,
        )
        resolved = resolve_noise(
            DPDGC,
            relation,
            params,
            self.epochs,
            self.epsilon,
            self.delta,
            self.budget_split,
            noise_std=self.noise_std,
            nu_pretrain=self.nu_pretrain,
            nu_classifier=self.nu_classifier,
        )
        self.resolved_ = resolved
        params = MechanismParams(
            s=resolved.noise_std, c=self.row_norm_c, D=self.degree_bound
        )

        A = np.asarray(dataset.adjacency, dtype=np.float64)
        A_lab = A[: dataset.m_labeled]
        Y = dataset.labels

        # stage 1: DP pretraining of the embedding weights
        pretrainer = _EmbeddingPretrainer(
            dataset.n, self.hidden_dim, dataset.num_classes, self.row_norm_c, self.seed
        )
        group = self._group_size(relation)
        pre_config = nn.DpOptimizerConfig(
            clip_norm=self.clip_norm if resolved.nu_pretrain > 0 else math.inf,
            noise_multiplier=resolved.nu_pretrain,
            group_size=group,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
        )
        hook = _epoch_metrics_hook(self, "embedding-pretrain")
        for t in range(self.epochs):
            step_seed = int(derive_rng(self.seed, "emb-step", t).integers(2**63))
            loss = pretrainer.step(A_lab, Y, pre_config, step_seed)
            hook(t, loss, None)
        gamma1 = compose([pre_config.step_curve] * self.epochs) if self.epochs else RdpCurve.zero()
        self.emb_weights_ = EmbWeights(W=pretrainer.W, b=pretrainer.b, c=self.row_norm_c)

        # stage 2: one noisy release of the embedding, cached to disk
        Z_emb = decoupled_release(A, self.emb_weights_, params, self.seed)
        cache = self._cache_dir() / "embedding.gdpz"
        save_embedding(Z_emb, cache)
        self.cache_path_ = cache
        self.embedding_ = load_embedding(cache).values
        mech = (
            gaussian_curve(
                theoretical_sensitivity(DPDGC, relation, self.degree_bound, self.row_norm_c),
                params.c * params.s,
            )
            if params.s > 0
            else (
                RdpCurve.zero()
                if mechanism_coefficient(DPDGC, relation, params) == 0
                else RdpCurve.linear(math.inf, provenance=("non-private",))
            )
        )

        # stage 3: end-to-end head on the feature branch and the cached embedding
        head = _CombinedHead(
            dataset.num_features,
            self.embedding_.shape[1],
            self.hidden_dim,
            dataset.num_classes,
            self.seed,
        )
        clf_private = not is_edge and resolved.nu_classifier > 0
        clf_config = nn.DpOptimizerConfig(
            clip_norm=self.clip_norm if clf_private else math.inf,
            noise_multiplier=resolved.nu_classifier if not is_edge else 0.0,
            group_size=1,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            dropout=0.0 if clf_private else self.dropout,
        )
        X_lab = dataset.features[: dataset.m_labeled]
        Z_lab = self.embedding_[: dataset.m_labeled]
        hook = _epoch_metrics_hook(self, "classifier")
        for t in range(self.epochs):
            grads, losses = head.per_sample_grads(X_lab, Z_lab, Y)
            step_seed = int(derive_rng(self.seed, "head-step", t).integers(2**63))
            new_params, _ = nn.dp_step(head.params(), grads, clf_config, step_seed)
            head.set_params_list(new_params)
            val_acc = self._split_val_accuracy(
                split,
                lambda idx: head.predict_proba(self.features_[idx], self.embedding_[idx]),
            )
            hook(t, float(losses.mean()), val_acc)
        gamma2 = (
            RdpCurve.zero()
            if is_edge
            else (compose([clf_config.step_curve] * self.epochs) if self.epochs else RdpCurve.zero())
        )
        self.head_ = head

        ledger = (("pretrain-optimizer", gamma1), ("embedding-release", mech))
        if not is_edge:
            ledger = ledger + (("classifier-optimizer", gamma2),)
        self.report_ = gdp_budget(
            DPDGC,
            relation,
            params,
            gamma1=gamma1,
            gamma2=gamma2,
            delta=self.delta,
            dataset=dataset,
            ledger=ledger,
            adaptive=True,
        )
        return self

    def _proba_rows(self, indices: np.ndarray) -> np.ndarray:
        return self.head_.predict_proba(self.features_[indices], self.embedding_[indices])
