import math

import numpy as np
import pytest

from ptcmil.clustering import partition
from ptcmil.errors import ShapeError
from ptcmil.flags import ParamGroup
from ptcmil.nn import EncoderLayer, ModelParams
from ptcmil.prototyping import ScoreHead, build_prototypes, gather_clusters, local_refine, merge
from ptcmil.tensor import Parameter, Tensor, finite_diff_check


@pytest.fixture
def local_setup():
    rng = np.random.default_rng(21)
    registry = ModelParams()
    layer = EncoderLayer(registry, "local", 4, 2, rng, group=ParamGroup.local_layer)
    score_head = ScoreHead(registry, 4, rng)
    return registry, layer, score_head


def _partition(labels, clusters):
    a = np.full((len(labels), clusters), 0.1)
    a[np.arange(len(labels)), labels] = 0.9
    return partition(a)


class TestMerge:
    def test_equal_scores_give_arithmetic_mean(self, rng):
        tokens = rng.normal(size=(5, 3))
        out = merge(Tensor(tokens), Tensor(np.full(5, 0.7)))
        np.testing.assert_allclose(out.values, tokens.mean(axis=0), atol=1e-15)

    def test_single_member_is_returned(self, rng):
        tokens = rng.normal(size=(1, 3))
        np.testing.assert_array_equal(merge(Tensor(tokens), Tensor([4.2])).values, tokens[0])

    def test_hand_computed_weights(self):
        out = merge(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([math.log(3.0), 0.0]))
        np.testing.assert_allclose(out.values, [0.75, 0.25], atol=1e-15)

    def test_score_shift_invariance(self, rng):
        tokens = Tensor(rng.normal(size=(6, 4)))
        scores = rng.normal(size=6)
        a = merge(tokens, Tensor(scores)).values
        b = merge(tokens, Tensor(scores + 17.5)).values
        assert np.abs(a - b).max() < 1e-12

    def test_convex_combination(self, rng):
        for _ in range(50):
            tokens = rng.normal(size=(int(rng.integers(1, 9)), 5))
            out = merge(Tensor(tokens), Tensor(rng.normal(scale=3.0, size=tokens.shape[0]))).values
            assert np.all(out >= tokens.min(axis=0) - 1e-12)
            assert np.all(out <= tokens.max(axis=0) + 1e-12)

    def test_empty_members_raise(self):
        with pytest.raises(ShapeError):
            merge(Tensor(np.zeros((0, 3))), Tensor(np.zeros(0)))

    def test_score_length_mismatch(self):
        with pytest.raises(ShapeError):
            merge(Tensor(np.zeros((3, 2))), Tensor(np.zeros(2)))


class TestLocalRefine:
    def test_gather_follows_partition(self, rng):
        part = _partition([1, 0, 1, 1], 3)
        clusters = gather_clusters(part, Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(4, 4))))
        assert [c.indices for c in clusters] == [[1], [0, 2, 3], []]
        assert clusters[2].members is None and clusters[2].is_empty

    def test_output_shapes(self, local_setup, rng):
        _, layer, _ = local_setup
        part = _partition([0, 2, 2, 0, 0], 3)
        refined = local_refine(part, Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(5, 4))), layer)
        assert [c.prompt.shape for c in refined] == [(4,)] * 3
        assert refined[0].members.shape == (3, 4)
        assert refined[1].members is None
        assert refined[2].members.shape == (2, 4)

    def test_empty_cluster_is_the_singleton_prompt(self, local_setup, rng):
        _, layer, _ = local_setup
        prompts = rng.normal(size=(2, 4))
        refined = local_refine(_partition([0, 0], 2), Tensor(prompts), Tensor(rng.normal(size=(2, 4))), layer)
        alone = layer(Tensor(prompts[1:2])).values[0]
        np.testing.assert_array_equal(refined[1].prompt.values, alone)

    def test_member_order_equivariance(self, local_setup, rng):
        _, layer, _ = local_setup
        prompt = rng.normal(size=(1, 4))
        members = rng.normal(size=(6, 4))
        perm = rng.permutation(6)
        part = _partition([0] * 6, 1)
        a = local_refine(part, Tensor(prompt), Tensor(members), layer)[0]
        b = local_refine(part, Tensor(prompt), Tensor(members[perm]), layer)[0]
        assert np.abs(a.prompt.values - b.prompt.values).max() < 1e-9
        assert np.abs(a.members.values[perm] - b.members.values).max() < 1e-9


class TestBuildPrototypes:
    def test_empty_cluster_uses_refined_prompt(self, local_setup, rng):
        _, layer, score_head = local_setup
        part = _partition([0, 0, 2], 3)
        refined = local_refine(part, Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(3, 4))), layer)
        protos = build_prototypes(refined, score_head)
        assert protos.prototypes.shape == (3, 4)
        assert protos.empty == [False, True, False]
        np.testing.assert_array_equal(protos.prototypes.values[1], refined[1].prompt.values)
        assert protos.weights[1] is None
        np.testing.assert_allclose(protos.weights[0].sum(), 1.0, atol=1e-15)

    def test_merging_disabled_uses_prompts(self, local_setup, rng):
        _, layer, _ = local_setup
        part = _partition([0, 1, 1], 2)
        refined = local_refine(part, Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(3, 4))), layer)
        protos = build_prototypes(refined, None)
        np.testing.assert_array_equal(protos.prototypes.values, protos.prompts.values)

    def test_prototypes_are_convex_in_refined_members(self, local_setup, rng):
        _, layer, score_head = local_setup
        part = _partition([0, 1, 0, 0, 1, 1, 1], 2)
        refined = local_refine(part, Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(7, 4))), layer)
        protos = build_prototypes(refined, score_head).prototypes.values
        for c, cluster in enumerate(refined):
            members = cluster.members.values
            assert np.all(protos[c] >= members.min(axis=0) - 1e-12)
            assert np.all(protos[c] <= members.max(axis=0) + 1e-12)

    def test_patch_order_invariance(self, local_setup, rng):
        _, layer, score_head = local_setup
        prompts = rng.normal(size=(3, 4))
        tokens = rng.normal(size=(8, 4))
        a = rng.dirichlet(np.ones(3), size=8)
        perm = rng.permutation(8)

        def run(tok, assignment):
            refined = local_refine(partition(assignment), Tensor(prompts), Tensor(tok), layer)
            return build_prototypes(refined, score_head).prototypes.values

        assert np.abs(run(tokens, a) - run(tokens[perm], a[perm])).max() < 1e-9

    def test_gradients_through_refine_and_merge(self, local_setup, rng):
        registry, layer, score_head = local_setup
        prompts = Parameter(rng.normal(size=(2, 4)), name="prompts")
        tokens = Parameter(rng.normal(size=(5, 4)), name="tokens")
        part = _partition([0, 1, 1, 0, 1], 2)
        direction = rng.normal(size=(2, 4))

        def objective(_):
            refined = local_refine(part, prompts, tokens, layer)
            return (build_prototypes(refined, score_head).prototypes * direction).sum()

        err = finite_diff_check(objective, [*registry, prompts, tokens], 1e-5, floor=1e-6)
        assert err < 1e-4
