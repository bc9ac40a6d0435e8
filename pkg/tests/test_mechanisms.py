import math

import numpy as np
import pytest

from gdpkit.errors import ContractError, InvalidInputError
from gdpkit.graphs import AdjacencyRelation, row_normalize
from gdpkit.mechanisms import (
    EmbWeights,
    EmbeddingMatrix,
    MechanismParams,
    ProjectionHead,
    aggregation_hop,
    decoupled_release,
    gaussian_perturb,
    load_embedding,
    multi_hop_embedding,
    save_embedding,
    theoretical_sensitivity,
)

NK = AdjacencyRelation.kneighbor
NODE = AdjacencyRelation.node()
EDGE = AdjacencyRelation.edge()


def unit_rows(n, h, seed=0):
    rng = np.random.default_rng(seed)
    return row_normalize(rng.normal(size=(n, h)), 1.0)


class TestGaussianPerturb:
    def test_zero_noise_is_identity(self):
        x = np.random.default_rng(0).normal(size=(5, 4))
        assert np.array_equal(gaussian_perturb(x, 0.0, seed=3), x)

    def test_sample_statistics_within_standard_error(self):
        out = gaussian_perturb(np.zeros((1000, 64)), 2.0, seed=1)
        count = out.size
        assert abs(out.mean()) <= 3 * 2.0 / math.sqrt(count)
        assert abs(out.std() - 2.0) <= 2.0 * 3 / math.sqrt(2 * count)

    def test_same_seed_bit_identical(self):
        x = np.ones((8, 8))
        a = gaussian_perturb(x, 1.5, seed=7)
        b = gaussian_perturb(x, 1.5, seed=7)
        assert np.array_equal(a, b)

    def test_distinct_seeds_uncorrelated(self):
        shape = (1000, 100)
        a = gaussian_perturb(np.zeros(shape), 1.0, seed=1).ravel()
        b = gaussian_perturb(np.zeros(shape), 1.0, seed=2).ravel()
        corr = float(np.corrcoef(a, b)[0, 1])
        assert abs(corr) < 4 / math.sqrt(a.size)

    def test_shape_keyed_streams(self):
        # reshaping the input must not silently reuse the same noise values
        flat = gaussian_perturb(np.zeros((1, 64)), 1.0, seed=5)
        square = gaussian_perturb(np.zeros((8, 8)), 1.0, seed=5)
        assert not np.array_equal(flat.ravel(), square.ravel())


class TestAggregationHop:
    def test_no_edges_no_noise_gives_zeros(self):
        H = EmbeddingMatrix(values=unit_rows(5, 3), kind="hop", hop=0)
        out = aggregation_hop(H, np.zeros((5, 5)), s=0.0, seed=0)
        assert np.array_equal(out.values, np.zeros((5, 3)))
        assert out.kind == "hop" and out.hop == 1 and out.released

    def test_cycle_adjacency_permutes_rows(self):
        n = 6
        A = np.zeros((n, n))
        for j in range(n):
            A[(j + 1) % n, j] = 1.0  # edge j -> j+1
        H = EmbeddingMatrix(values=unit_rows(n, 4), kind="hop", hop=0)
        out = aggregation_hop(H, A, s=0.0, seed=0)
        assert np.allclose(out.values, np.roll(H.values, 1, axis=0))

    def test_output_rows_unit_or_zero(self):
        rng = np.random.default_rng(2)
        A = (rng.random((7, 7)) < 0.4).astype(float)
        np.fill_diagonal(A, 0)
        H = EmbeddingMatrix(values=unit_rows(7, 5, seed=3), kind="hop", hop=0)
        out = aggregation_hop(H, A, s=1.3, seed=4)
        norms = np.linalg.norm(out.values, axis=1)
        assert np.all((np.abs(norms - 1.0) < 1e-12) | (norms == 0.0))

    def test_unnormalized_input_rejected(self):
        bad = EmbeddingMatrix(values=np.full((4, 3), 2.0), kind="hop", hop=0)
        with pytest.raises(ContractError):
            aggregation_hop(bad, np.zeros((4, 4)), s=0.0, seed=0)

    def test_wrong_kind_rejected(self):
        z = EmbeddingMatrix(values=unit_rows(4, 3), kind="concat")
        with pytest.raises(ContractError):
            aggregation_hop(z, np.zeros((4, 4)), s=0.0, seed=0)


class TestMultiHop:
    def test_single_hop_doubles_width(self):
        H0 = EmbeddingMatrix(values=unit_rows(5, 4), kind="hop", hop=0)
        out = multi_hop_embedding(H0, np.zeros((5, 5)), MechanismParams(s=0.0, L=1), seed=0)
        assert out.values.shape == (5, 8)
        assert out.kind == "concat"

    def test_zero_graph_zero_noise_propagates_zeros(self):
        H0 = EmbeddingMatrix(values=unit_rows(5, 4), kind="hop", hop=0)
        out = multi_hop_embedding(H0, np.zeros((5, 5)), MechanismParams(s=0.0, L=3), seed=0)
        assert np.array_equal(out.values[:, :4], H0.values)
        assert np.array_equal(out.values[:, 4:], np.zeros((5, 12)))

    def test_reproducible_given_seed(self):
        rng = np.random.default_rng(5)
        A = (rng.random((6, 6)) < 0.5).astype(float)
        np.fill_diagonal(A, 0)
        H0 = EmbeddingMatrix(values=unit_rows(6, 4, seed=1), kind="hop", hop=0)
        params = MechanismParams(s=0.7, L=2)
        a = multi_hop_embedding(H0, A, params, seed=11)
        b = multi_hop_embedding(H0, A, params, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_hops_use_independent_noise(self):
        H0 = EmbeddingMatrix(values=unit_rows(6, 4, seed=1), kind="hop", hop=0)
        A = np.zeros((6, 6))
        out = multi_hop_embedding(H0, A, MechanismParams(s=1.0, L=2), seed=11)
        hop1 = out.values[:, 4:8]
        hop2 = out.values[:, 8:12]
        assert not np.allclose(hop1, hop2)


def normalized_weights(n, h, c, seed=0):
    rng = np.random.default_rng(seed)
    return EmbWeights(W=row_normalize(rng.normal(size=(n, h)), c), b=np.zeros(h), c=c)


class TestDecoupledRelease:
    def test_single_edge_copies_weight_row(self):
        n, h = 5, 3
        w = normalized_weights(n, h, 1.0)
        A = np.zeros((n, n))
        A[2, 4] = 1.0  # edge 4 -> 2
        out = decoupled_release(A, w, MechanismParams(s=0.0, c=1.0), seed=0)
        assert np.allclose(out.values[2], row_normalize(w.W[[4]], 1.0)[0])
        assert out.kind == "dpdgc" and out.released

    def test_deterministic_given_seed(self):
        n, h = 6, 4
        w = normalized_weights(n, h, 1.0)
        A = (np.random.default_rng(3).random((n, n)) < 0.4).astype(float)
        np.fill_diagonal(A, 0)
        params = MechanismParams(s=1.1, c=1.0)
        assert np.array_equal(
            decoupled_release(A, w, params, seed=9).values,
            decoupled_release(A, w, params, seed=9).values,
        )

    def test_row_norm_constant_couples_signal_and_noise(self):
        # With shared seeds, Z_c - b = c * (Z_1 - b) before normalization.
        n, h, c = 6, 4, 1e-8
        base = normalized_weights(n, h, 1.0, seed=2)
        scaled = EmbWeights(W=base.W * c, b=base.b, c=c)
        A = (np.random.default_rng(4).random((n, n)) < 0.5).astype(float)
        np.fill_diagonal(A, 0)
        z1 = decoupled_release(A, base, MechanismParams(s=2.0, c=1.0), seed=5, normalize=False)
        zc = decoupled_release(A, scaled, MechanismParams(s=2.0, c=c), seed=5, normalize=False)
        assert np.allclose(zc.values - scaled.b, c * (z1.values - base.b), rtol=1e-12, atol=0)

    def test_signal_to_noise_invariant_in_c(self):
        n, h = 8, 4
        base = normalized_weights(n, h, 1.0, seed=2)
        A = (np.random.default_rng(4).random((n, n)) < 0.5).astype(float)
        np.fill_diagonal(A, 0)
        s = 1.7
        ratios = []
        for c in (1.0, 1e-8):
            w = EmbWeights(W=base.W * c, b=base.b, c=c)
            signal = float(np.linalg.norm(A @ w.W))
            ratios.append(signal / (c * s * math.sqrt(n * h)))
        assert ratios[0] == pytest.approx(ratios[1], rel=1e-9)

    def test_weight_norm_violation_rejected(self):
        w = EmbWeights(W=np.full((4, 3), 0.5), b=np.zeros(3), c=1.0)
        with pytest.raises(ContractError):
            decoupled_release(np.zeros((4, 4)), w, MechanismParams(s=0.0, c=1.0), seed=0)

    def test_mismatched_c_rejected(self):
        w = normalized_weights(4, 3, 1.0)
        with pytest.raises(ContractError):
            decoupled_release(np.zeros((4, 4)), w, MechanismParams(s=0.0, c=0.5), seed=0)


class TestTheoreticalSensitivity:
    def test_multi_hop_node_value(self):
        assert theoretical_sensitivity("gap", NODE, 100) == pytest.approx(20.0)

    def test_decoupled_zero_k(self):
        assert theoretical_sensitivity("dpdgc", NK(0), c=5.0) == 0.0

    def test_decoupled_node_value(self):
        assert theoretical_sensitivity("dpdgc", NODE, 100, c=1.0) == pytest.approx(math.sqrt(200))

    def test_multi_hop_free_of_k(self):
        values = {theoretical_sensitivity("gap", NK(k), 7) for k in (0, 1, 5, 14, 1000)}
        assert values == {theoretical_sensitivity("gap", NODE, 7)}

    def test_decoupled_monotone_and_meets_node_at_2d(self):
        D, c = 6, 0.5
        values = [theoretical_sensitivity("dpdgc", NK(k), D, c) for k in range(0, 2 * D + 1)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[2 * D] == pytest.approx(theoretical_sensitivity("dpdgc", NODE, D, c))

    def test_edge_values(self):
        assert theoretical_sensitivity("gap", EDGE) == 1.0
        assert theoretical_sensitivity("dpdgc", EDGE, c=0.25) == 0.25


class TestEmbeddingCache:
    def test_round_trip(self, tmp_path):
        values = np.random.default_rng(0).normal(size=(7, 5))
        emb = EmbeddingMatrix(values=values, kind="dpdgc", released=True)
        path = save_embedding(emb, tmp_path / "z.gdpz")
        back = load_embedding(path)
        assert np.array_equal(back.values, values)
        assert back.kind == "dpdgc" and back.released

    def test_header_layout(self, tmp_path):
        emb = EmbeddingMatrix(values=np.zeros((2, 3)), kind="concat", released=True)
        raw = save_embedding(emb, tmp_path / "z.gdpz").read_bytes()
        assert raw[:4] == b"GDPZ"
        assert len(raw) == 26 + 2 * 3 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.gdpz"
        path.write_bytes(b"NOPE" + bytes(100))
        with pytest.raises(InvalidInputError):
            load_embedding(path)

    def test_truncated_file_rejected(self, tmp_path):
        emb = EmbeddingMatrix(values=np.zeros((4, 4)), kind="hop", hop=1)
        raw = save_embedding(emb, tmp_path / "z.gdpz").read_bytes()
        (tmp_path / "cut.gdpz").write_bytes(raw[:-8])
        with pytest.raises(InvalidInputError):
            load_embedding(tmp_path / "cut.gdpz")


class TestProjectionHead:
    def test_frozen_and_seeded(self):
        a = ProjectionHead.create(8, 3, seed=4)
        b = ProjectionHead.create(8, 3, seed=4)
        assert np.array_equal(a.R, b.R)
        with pytest.raises(ValueError):
            a.R[0, 0] = 1.0

    def test_params_validation(self):
        with pytest.raises(InvalidInputError):
            MechanismParams(s=-1.0)
        with pytest.raises(InvalidInputError):
            MechanismParams(s=1.0, c=0.0)
        with pytest.raises(InvalidInputError):
            MechanismParams(s=1.0, L=0)
