"""Contextual stochastic block model generator.

Two equal communities with labels +-1; undirected edges drawn independently
with probability (d + lambda sqrt(d)) / n inside a community and
(d - lambda sqrt(d)) / n across, stored as symmetric directed pairs.  Node
features are spiked Gaussians: b_i = sqrt(mu / n) v_i u + Z_i / sqrt(f) with a
single shared direction u ~ N(0, I/f) and standard-normal Z_i.  The signal
levels (lambda, mu) live on the arc lambda^2 + mu^2 / xi = 1 + eps_arc with
xi = n / f; the angle phi in [-1, 1] moves the information between features
(phi = 0) and topology (|phi| = 1), negative phi making the graph heterophilic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .graphs import GraphDataset
from .rng import derive_rng

DEFAULT_EPS_ARC = 3.25


def phi_to_params(phi: float, eps_arc: float, xi: float) -> tuple[float, float]:
    """Angular point on the arc: lambda = sqrt(1+eps) sin(phi pi/2),
    mu = sqrt(xi (1+eps)) cos(phi pi/2)."""
    if not -1.0 <= phi <= 1.0:
        raise InvalidInputError(f"phi must lie in [-1, 1], got {phi}")
    if not eps_arc > 0:
        raise InvalidInputError(f"eps_arc must be positive, got {eps_arc}")
    if not xi > 0:
        raise InvalidInputError(f"xi must be positive, got {xi}")
    angle = phi * math.pi / 2.0
    lam = math.sqrt(1.0 + eps_arc) * math.sin(angle)
    mu = math.sqrt(xi * (1.0 + eps_arc)) * math.cos(angle)
    return lam, mu


@dataclass(frozen=True)
class CsbmParams:
    n: int
    f: int
    d: float
    phi: float
    eps_arc: float = DEFAULT_EPS_ARC
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 2:
            raise InvalidInputError("n must be >= 2")
        if int(self.f) < 1:
            raise InvalidInputError("f must be >= 1")
        if not self.d > 0:
            raise InvalidInputError("average degree d must be positive")
        lam, _ = phi_to_params(self.phi, self.eps_arc, int(self.n) / int(self.f))
        p_intra = (self.d + lam * math.sqrt(self.d)) / int(self.n)
        p_inter = (self.d - lam * math.sqrt(self.d)) / int(self.n)
        for name, p in (("intra", p_intra), ("inter", p_inter)):
            if not 0.0 <= p <= 1.0:
                raise InvalidInputError(
                    f"{name}-class edge probability {p:.4f} outside [0, 1]; "
                    "reduce |phi|, eps_arc, or d"
                )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "f", int(self.f))

    @property
    def xi(self) -> float:
        return self.n / self.f

    @property
    def lam(self) -> float:
        return phi_to_params(self.phi, self.eps_arc, self.xi)[0]

    @property
    def mu(self) -> float:
        return phi_to_params(self.phi, self.eps_arc, self.xi)[1]

    def edge_probabilities(self) -> tuple[float, float]:
        """(intra, inter) edge probabilities."""
        root = math.sqrt(self.d)
        return (self.d + self.lam * root) / self.n, (self.d - self.lam * root) / self.n

    def meta(self) -> dict:
        return {
            "n": self.n,
            "f": self.f,
            "d": self.d,
            "phi": self.phi,
            "eps_arc": self.eps_arc,
            "lambda": self.lam,
            "mu": self.mu,
            "seed": self.seed,
        }


def generate(params: CsbmParams) -> GraphDataset:
    """Draw a dataset; all nodes are labeled (splitting is a later concern).

    Deterministic given the seed.  Community sizes differ by at most one;
    the adjacency is exactly symmetric with a zero diagonal.
    """
    n, f = params.n, params.f
    signs = np.ones(n)
    signs[n // 2 :] = -1.0

    p_intra, p_inter = params.edge_probabilities()
    rng_edges = derive_rng(params.seed, "csbm-edges")
    uniform = rng_edges.random((n, n))
    same = np.outer(signs, signs) > 0
    thresholds = np.where(same, p_intra, p_inter)
    upper = np.triu(uniform < thresholds, k=1)
    adjacency = (upper | upper.T).astype(np.int8)

    rng_u = derive_rng(params.seed, "csbm-direction")
    u = rng_u.standard_normal(f) / math.sqrt(f)
    rng_noise = derive_rng(params.seed, "csbm-features")
    noise = rng_noise.standard_normal((n, f))
    features = math.sqrt(params.mu / n) * signs[:, None] * u[None, :] + noise / math.sqrt(f)

    labels = np.zeros((n, 2))
    labels[signs > 0, 0] = 1.0
    labels[signs <= 0, 1] = 1.0

    return GraphDataset(adjacency=adjacency, features=features, labels=labels)
