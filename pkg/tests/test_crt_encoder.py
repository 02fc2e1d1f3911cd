"""
CRT 编码器测试
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from crt_encoder import (
    BaselineBranch,
    BranchConfig,
    BranchKind,
    CrtBranch,
    EmbeddingHead,
    FeatureMap,
    PrototypeSet,
    correlation_map,
    embed,
    encode_residuals,
    forward_branch,
    forward_branch_batch,
    identity_head,
    init_branch,
)
from crt_encoder.models import ResidualCode
from tensor_autodiff import DegenerateVectorError, ShapeError, Tensor

LN2 = float(np.log(2.0))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _random_head(rng, in_dim, hidden_dim, out_dim):
    return EmbeddingHead(
        w1=Tensor(rng.normal(size=(in_dim, hidden_dim))),
        b1=Tensor(rng.normal(size=hidden_dim)),
        w2=Tensor(rng.normal(size=(hidden_dim, out_dim))),
        b2=Tensor(rng.normal(size=out_dim)),
    )


class TestFeatureMapAndPrototypes:

    def test_from_grid_row_major(self):
        grid = np.arange(12, dtype=float).reshape(2, 2, 3)
        fm = FeatureMap.from_grid(grid)
        assert fm.positions == 4 and fm.dim == 3
        assert_allclose(fm.features[1], [3.0, 4.0, 5.0])
        assert_allclose(fm.grid(), grid)

    def test_wrong_feature_count_rejected(self):
        with pytest.raises(ShapeError):
            FeatureMap(height=2, width=2, features=np.ones((3, 2)))

    def test_zero_prototype_rejected(self):
        with pytest.raises(DegenerateVectorError):
            PrototypeSet.from_array([[1.0, 0.0], [0.0, 0.0]])

    def test_head_shape_checks(self):
        with pytest.raises(ShapeError):
            EmbeddingHead(w1=Tensor(np.ones((2, 3))), b1=Tensor(np.ones(2)),
                          w2=Tensor(np.ones((3, 2))), b2=Tensor(np.ones(2)))


class TestCorrelationMap:

    def test_orthogonal_gives_zero_map(self):
        fm = FeatureMap(height=2, width=2, features=np.tile([1.0, 0.0], (4, 1)))
        ps = PrototypeSet.from_array([[0.0, 1.0], [1.0, 0.0]])
        out = correlation_map(fm, ps).numpy()
        assert out.shape == (2, 2, 2)
        assert_allclose(out[0], np.zeros((2, 2)))
        assert_allclose(out[1], np.ones((2, 2)))

    def test_self_correlation(self):
        fm = FeatureMap(height=3, width=1, features=np.tile([1.0, 1.0], (3, 1)))
        ps = PrototypeSet.from_array([[1.0, 1.0]])
        assert_allclose(correlation_map(fm, ps).numpy(), np.full((1, 3, 1), 2.0))

    def test_matches_triple_loop(self, rng):
        grid = rng.normal(size=(2, 2, 3))
        protos = rng.normal(size=(4, 3))
        out = correlation_map(FeatureMap.from_grid(grid), PrototypeSet.from_array(protos)).numpy()
        expected = np.zeros((4, 2, 2))
        for k in range(4):
            for i in range(2):
                for j in range(2):
                    expected[k, i, j] = sum(protos[k, d] * grid[i, j, d] for d in range(3))
        assert_allclose(out, expected, atol=1e-12)

    def test_dimension_mismatch(self):
        fm = FeatureMap(height=1, width=1, features=np.ones((1, 3)))
        with pytest.raises(ShapeError):
            correlation_map(fm, PrototypeSet.from_array([[1.0, 0.0]]))


class TestEncodeResiduals:

    def test_feature_equal_to_prototype_gives_zero(self):
        c = [0.5, -1.0, 2.0]
        fm = FeatureMap(height=2, width=2, features=np.tile(c, (4, 1)))
        rc = encode_residuals(fm, PrototypeSet.from_array([c]))
        assert_allclose(rc.codes.numpy(), np.zeros((1, 3)), atol=1e-12)

    def test_single_orthogonal_feature(self):
        fm = FeatureMap(height=1, width=1, features=[[1.0, 0.0]])
        rc = encode_residuals(fm, PrototypeSet.from_array([[0.0, 1.0]]))
        assert_allclose(rc.codes.numpy(), [[LN2, -LN2]], atol=1e-12)

    def test_two_features(self):
        fm = FeatureMap(height=1, width=2, features=[[1.0, 0.0], [0.0, 2.0]])
        rc = encode_residuals(fm, PrototypeSet.from_array([[1.0, 0.0]]))
        assert_allclose(rc.codes.numpy(), [[-LN2, 2.0 * LN2]], atol=1e-12)

    def test_matches_loop_oracle(self, rng):
        features = rng.normal(size=(6, 4))
        protos = rng.normal(size=(3, 4))
        rc = encode_residuals(FeatureMap(height=2, width=3, features=features),
                              PrototypeSet.from_array(protos))
        expected = np.zeros((3, 4))
        for k in range(3):
            for j in range(6):
                expected[k] += _softplus(protos[k] @ features[j]) * (features[j] - protos[k])
        assert_allclose(rc.codes.numpy(), expected, atol=1e-12)

    def test_random_instances_match_oracle(self, rng):
        for _ in range(100):
            h, w, dim, count = rng.integers(1, 5, size=4)
            features = rng.normal(size=(h * w, dim))
            protos = rng.normal(size=(count, dim))
            rc = encode_residuals(FeatureMap(height=int(h), width=int(w), features=features),
                                  PrototypeSet.from_array(protos))
            weights = _softplus(protos @ features.T)
            expected = weights @ features - weights.sum(axis=1, keepdims=True) * protos
            assert_allclose(rc.codes.numpy(), expected, rtol=1e-9, atol=1e-9)


class TestEmbed:

    def test_single_prototype_identity_passthrough(self):
        cfg = BranchConfig(num_prototypes=1, hidden_dim=4, embed_dim=2)
        rc = ResidualCode(Tensor([[0.3, -1.7]]))
        assert_allclose(embed(rc, [identity_head(2)], cfg).numpy(), [0.3, -1.7], atol=1e-12)

    def test_mean_over_prototypes(self):
        cfg = BranchConfig(num_prototypes=2, hidden_dim=4, embed_dim=2)
        rc = ResidualCode(Tensor([[2.0, 0.0], [0.0, 2.0]]))
        out = embed(rc, [identity_head(2), identity_head(2)], cfg)
        assert_allclose(out.numpy(), [1.0, 1.0], atol=1e-12)

    def test_matches_per_head_oracle(self, rng):
        cfg = BranchConfig(num_prototypes=4, hidden_dim=5, embed_dim=3)
        heads = [_random_head(rng, 2, 5, 3) for _ in range(4)]
        codes = rng.normal(size=(4, 2))
        out = embed(ResidualCode(Tensor(codes)), heads, cfg).numpy()
        expected = np.mean([
            _gelu(codes[k] @ h.w1.data + h.b1.data) @ h.w2.data + h.b2.data
            for k, h in enumerate(heads)
        ], axis=0)
        assert_allclose(out, expected, atol=1e-10)

    def test_shared_head(self, rng):
        cfg = BranchConfig(num_prototypes=3, hidden_dim=5, embed_dim=2, per_prototype_heads=False)
        head = _random_head(rng, 2, 5, 2)
        codes = rng.normal(size=(3, 2))
        out = embed(ResidualCode(Tensor(codes)), [head], cfg).numpy()
        expected = np.mean([_gelu(c @ head.w1.data + head.b1.data) @ head.w2.data + head.b2.data
                            for c in codes], axis=0)
        assert_allclose(out, expected, atol=1e-10)

    def test_head_count_mismatch(self):
        cfg = BranchConfig(num_prototypes=2, hidden_dim=4, embed_dim=2)
        with pytest.raises(ShapeError):
            embed(ResidualCode(Tensor(np.ones((2, 2)))), [identity_head(2)], cfg)


class TestForwardBranch:

    def test_output_extent(self, rng):
        cfg = BranchConfig(num_prototypes=49, hidden_dim=16, embed_dim=128)
        branch = init_branch(cfg, 32, rng)
        fm = FeatureMap.from_grid(rng.normal(size=(7, 7, 32)))
        out = forward_branch(fm, branch.prototypes, branch.heads, cfg)
        assert out.shape == (128,)

    def test_zero_residual_propagates(self):
        cfg = BranchConfig(num_prototypes=1, hidden_dim=6, embed_dim=3)
        c = [1.0, 2.0, -1.0]
        fm = FeatureMap(height=1, width=1, features=[c])
        out = forward_branch(fm, PrototypeSet.from_array([c]), [identity_head(3)], cfg)
        assert_allclose(out.numpy(), np.zeros(3), atol=1e-12)

    def test_equals_composition(self, rng):
        cfg = BranchConfig(num_prototypes=3, hidden_dim=4, embed_dim=5)
        branch = init_branch(cfg, 4, rng)
        fm = FeatureMap.from_grid(rng.normal(size=(2, 3, 4)))
        direct = forward_branch(fm, branch.prototypes, branch.heads, cfg).numpy()
        composed = embed(encode_residuals(fm, branch.prototypes), branch.heads, cfg).numpy()
        assert np.array_equal(direct, composed)

    def test_batch_matches_per_sample(self, rng):
        cfg = BranchConfig(num_prototypes=3, hidden_dim=4, embed_dim=5)
        branch = init_branch(cfg, 4, rng)
        x = rng.normal(size=(3, 6, 4))
        batch = forward_branch_batch(Tensor(x), branch.prototypes, branch.heads, cfg).numpy()
        for n in range(3):
            single = forward_branch(Tensor(x[n]), branch.prototypes, branch.heads, cfg).numpy()
            assert_allclose(batch[n], single, atol=1e-12)


class TestBranches:

    def test_named_parameters(self, rng):
        cfg = BranchConfig(name="branch1", num_prototypes=2, hidden_dim=3, embed_dim=4)
        branch = init_branch(cfg, 5, rng)
        names = [name for name, _ in branch.named_parameters()]
        assert names[0] == "branch1.prototypes"
        assert "branch1.heads.1.w2" in names
        assert len(names) == 1 + 4 * 2

    def test_prototypes_initialised_on_unit_sphere(self, rng):
        branch = init_branch(BranchConfig(num_prototypes=6, hidden_dim=3, embed_dim=4), 5, rng)
        assert_allclose(np.linalg.norm(branch.prototypes.prototypes.data, axis=1), np.ones(6))

    def test_share_first_layer(self, rng):
        first = init_branch(BranchConfig(name="branch1", num_prototypes=2, hidden_dim=3, embed_dim=4), 5, rng)
        second = init_branch(BranchConfig(name="branch2", num_prototypes=3, hidden_dim=3, embed_dim=6), 5, rng,
                             share_with=first)
        assert second.heads[0].w1 is first.heads[0].w1
        assert second.heads[2].w1 is first.heads[0].w1
        assert second.heads[0].w2 is not first.heads[0].w2

    def test_no_sharing_when_hidden_dims_differ(self, rng):
        first = init_branch(BranchConfig(name="branch1", num_prototypes=2, hidden_dim=3, embed_dim=4), 5, rng)
        second = init_branch(BranchConfig(name="branch2", num_prototypes=2, hidden_dim=7, embed_dim=4), 5, rng,
                             share_with=first)
        assert second.heads[0].w1 is not first.heads[0].w1

    def test_baseline_branch(self, rng):
        cfg = BranchConfig(name="baseline", kind=BranchKind.BASELINE, embed_dim=3)
        branch = init_branch(cfg, 4, rng)
        assert isinstance(branch, BaselineBranch)
        x = rng.normal(size=(2, 5, 4))
        out = branch.forward(Tensor(x)).numpy()
        assert_allclose(out, x.mean(axis=1) @ branch.weight.data + branch.bias.data, atol=1e-12)
        assert [n for n, _ in branch.named_parameters()] == ["baseline.weight", "baseline.bias"]

    def test_crt_branch_rejects_wrong_prototype_count(self, rng):
        cfg = BranchConfig(num_prototypes=3, hidden_dim=4, embed_dim=2)
        with pytest.raises(ShapeError):
            CrtBranch(cfg, PrototypeSet.from_array(np.eye(2)), [identity_head(2)] * 3)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            BranchConfig(num_protos=3)


class TestPermutations:

    def test_position_permutation_leaves_codes_unchanged(self, rng):
        features = rng.normal(size=(12, 5))
        ps = PrototypeSet.from_array(rng.normal(size=(4, 5)))
        base = encode_residuals(FeatureMap(height=3, width=4, features=features), ps).codes.numpy()
        for _ in range(10):
            shuffled = features[rng.permutation(12)]
            out = encode_residuals(FeatureMap(height=4, width=3, features=shuffled), ps).codes.numpy()
            assert_allclose(out, base, rtol=1e-12, atol=1e-12)

    def test_prototype_permutation_permutes_codes(self, rng):
        fm = FeatureMap(height=2, width=3, features=rng.normal(size=(6, 4)))
        protos = rng.normal(size=(5, 4))
        base = encode_residuals(fm, PrototypeSet.from_array(protos)).codes.numpy()
        order = rng.permutation(5)
        out = encode_residuals(fm, PrototypeSet.from_array(protos[order])).codes.numpy()
        assert_allclose(out, base[order], rtol=1e-12, atol=1e-12)

    def test_identical_heads_make_embedding_order_free(self, rng):
        cfg = BranchConfig(num_prototypes=5, hidden_dim=6, embed_dim=3)
        head = _random_head(rng, 4, 6, 3)
        codes = rng.normal(size=(5, 4))
        base = embed(ResidualCode(Tensor(codes)), [head] * 5, cfg).numpy()
        out = embed(ResidualCode(Tensor(codes[rng.permutation(5)])), [head] * 5, cfg).numpy()
        assert_allclose(out, base, rtol=1e-12, atol=1e-12)
