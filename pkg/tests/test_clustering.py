import math

import numpy as np
import pytest

from ptcmil.clustering import PromptBank, assign, ema_update, gram_schmidt, init_prompts, partition, reg_loss
from ptcmil.enums import GramSide
from ptcmil.errors import ConfigError, NumericFailure, ShapeError
from ptcmil.nn import ModelParams
from ptcmil.tensor import Parameter, Tensor, backward, finite_diff_check


class TestInitPrompts:
    def test_textbook_gram_schmidt(self):
        out = gram_schmidt([[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(out, np.eye(2), atol=1e-15)

    def test_dependent_rows_raise(self):
        with pytest.raises(NumericFailure):
            gram_schmidt([[1.0, 2.0], [2.0, 4.0]])

    @pytest.mark.parametrize(("clusters", "dim"), [(1, 1), (3, 8), (5, 32), (8, 8)])
    def test_rows_are_orthonormal(self, clusters, dim):
        bank = init_prompts(clusters, dim, np.random.default_rng(clusters * dim))
        p = bank.prompts.values
        np.testing.assert_allclose(p @ p.T, np.eye(clusters), atol=1e-10)
        np.testing.assert_array_equal(bank.shadow, p)
        assert reg_loss(Tensor(p)).item() < 1e-12

    def test_more_prompts_than_dimensions(self, rng):
        with pytest.raises(ConfigError) as info:
            init_prompts(3, 2, rng)
        assert info.value.problems[0].startswith("clusters:")

    def test_seeded_draws_repeat(self):
        a = init_prompts(4, 8, np.random.default_rng(5)).prompts.values
        b = init_prompts(4, 8, np.random.default_rng(5)).prompts.values
        np.testing.assert_array_equal(a, b)

    def test_registry_registration(self, rng):
        registry = ModelParams()
        bank = init_prompts(2, 4, rng, registry=registry)
        assert registry["prompts"] is bank.prompts

    def test_shadow_is_a_copy(self, rng):
        bank = init_prompts(2, 4, rng)
        bank.prompts.values[0, 0] += 1.0
        assert bank.shadow[0, 0] != bank.prompts.values[0, 0]


class TestAssign:
    def test_single_cluster_is_all_ones(self, rng):
        a = assign(Tensor(rng.normal(size=(5, 4))), Tensor(rng.normal(size=(1, 4))))
        np.testing.assert_array_equal(a.values, np.ones((5, 1)))

    def test_orthogonal_patch_is_uniform(self):
        prompts = Tensor(np.eye(3, 4))
        a = assign(Tensor([[0.0, 0.0, 0.0, 2.5]]), prompts)
        np.testing.assert_allclose(a.values, [[1 / 3] * 3], atol=1e-15)

    def test_hand_computed_row(self):
        prompts = Tensor(np.eye(2))
        a = assign(Tensor([[math.log(3.0), 0.0]]), prompts)
        np.testing.assert_allclose(a.values, [[0.75, 0.25]], atol=1e-12)

    def test_rows_are_stochastic(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n, c, d = (int(v) for v in rng.integers(1, 6, size=3))
            a = assign(Tensor(rng.normal(size=(n, d))), Tensor(rng.normal(size=(c, d)))).values
            assert np.abs(a.sum(axis=1) - 1.0).max() < 1e-9
            assert np.all((a > 0) & (a <= 1))

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            assign(Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(2, 4))))

    def test_gradients_reach_patches_and_prompts(self, rng):
        e1 = Parameter(rng.normal(size=(5, 4)), name="e1")
        p1 = Parameter(rng.normal(size=(3, 4)), name="p1")
        direction = rng.normal(size=(5, 3))
        err = finite_diff_check(lambda p: (assign(p[0], p[1]).tensor * direction).sum(), [e1, p1], 1e-5, floor=1e-6)
        assert err < 1e-4


class TestPartition:
    def test_argmax_and_ties(self):
        part = partition([[0.2, 0.8], [0.5, 0.5]])
        assert part.labels.tolist() == [1, 0]
        np.testing.assert_array_equal(part.max_probability, [0.8, 0.5])

    def test_empty_clusters_are_flagged(self):
        part = partition([[0.6, 0.3, 0.1], [0.5, 0.25, 0.25]])
        assert part.empty == [False, True, True]
        assert part.groups == [[0, 1], [], []]
        assert part.sizes() == [2, 0, 0]

    def test_groups_cover_every_patch_in_order(self, rng):
        a = rng.dirichlet(np.ones(4), size=30)
        part = partition(a)
        flat = sorted(i for g in part.groups for i in g)
        assert flat == list(range(30))
        for g in part.groups:
            assert g == sorted(g)

    def test_row_rescaling_invariance(self, rng):
        a = rng.dirichlet(np.ones(4), size=20)
        scaled = a * rng.uniform(0.1, 10.0, size=(20, 1))
        np.testing.assert_array_equal(partition(a).labels, partition(scaled).labels)

    def test_patch_reordering_equivariance(self, rng):
        a = rng.dirichlet(np.ones(3), size=15)
        perm = rng.permutation(15)
        np.testing.assert_array_equal(partition(a[perm]).labels, partition(a).labels[perm])

    def test_rejects_vectors(self):
        with pytest.raises(ShapeError):
            partition([0.5, 0.5])


class TestEma:
    def test_hand_computed_step(self):
        bank = PromptBank(Parameter(np.ones((2, 3)), name="prompts"), theta=0.9, shadow=np.zeros((2, 3)))
        out = ema_update(bank, bank.prompts)
        np.testing.assert_allclose(bank.shadow, np.full((2, 3), 0.1), atol=1e-15)
        np.testing.assert_array_equal(out.values, bank.shadow)
        assert bank.step == 1

    def test_unit_decay_keeps_shadow(self, rng):
        shadow = rng.normal(size=(2, 3))
        bank = PromptBank(Parameter(rng.normal(size=(2, 3)), name="prompts"), theta=1.0, shadow=shadow)
        ema_update(bank, bank.prompts)
        np.testing.assert_array_equal(bank.shadow, shadow)

    def test_geometric_convergence(self, rng):
        target = rng.normal(size=(3, 4))
        bank = PromptBank(Parameter(target, name="prompts"), theta=0.9, shadow=np.zeros((3, 4)))
        residuals = [np.linalg.norm(bank.shadow - target)]
        for _ in range(10):
            ema_update(bank, bank.prompts)
            residuals.append(np.linalg.norm(bank.shadow - target))
        ratios = np.array(residuals[1:]) / np.array(residuals[:-1])
        np.testing.assert_allclose(ratios, 0.9, atol=1e-9)

    def test_gradient_flows_through_current_term_only(self, rng):
        bank = PromptBank(Parameter(rng.normal(size=(2, 3)), name="prompts"), theta=0.9, shadow=np.zeros((2, 3)))
        grads = backward(ema_update(bank, bank.prompts).sum())
        np.testing.assert_allclose(grads["prompts"], np.full((2, 3), 0.1), atol=1e-15)

    def test_dry_run_does_not_commit(self, rng):
        bank = PromptBank(Parameter(rng.normal(size=(2, 3)), name="prompts"), shadow=np.zeros((2, 3)))
        ema_update(bank, bank.prompts, commit=False)
        np.testing.assert_array_equal(bank.shadow, np.zeros((2, 3)))
        assert bank.step == 0

    @pytest.mark.parametrize("theta", [-0.1, 1.5])
    def test_invalid_decay(self, theta):
        with pytest.raises(ConfigError):
            PromptBank(Parameter(np.ones((1, 2)), name="prompts"), theta=theta)

    def test_shape_mismatch(self, rng):
        bank = PromptBank(Parameter(np.ones((2, 3)), name="prompts"))
        with pytest.raises(ShapeError):
            ema_update(bank, Tensor(np.ones((3, 2))))


class TestRegLoss:
    def test_square_orthonormal_is_zero(self):
        q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(4, 4)))
        for gram in GramSide:
            assert reg_loss(Tensor(q), gram).item() < 1e-12

    def test_exact_identity_is_zero(self):
        assert reg_loss(Tensor(np.eye(3))).item() == pytest.approx(0.0, abs=1e-18)

    def test_zero_matrix(self):
        for gram in GramSide:
            assert reg_loss(Tensor(np.zeros((2, 2))), gram).item() == pytest.approx(math.sqrt(2.0), abs=1e-15)

    def test_identical_unit_rows(self):
        p = Tensor([[1.0, 0.0], [1.0, 0.0]])
        assert reg_loss(p, GramSide.columns).item() == pytest.approx(math.sqrt(2.0), abs=1e-15)

    def test_rows_and_columns_differ_for_wide_prompts(self, rng):
        bank = init_prompts(3, 6, rng)
        p = Tensor(bank.prompts.values)
        assert reg_loss(p, GramSide.rows).item() < 1e-12
        assert reg_loss(p, GramSide.columns).item() == pytest.approx(math.sqrt(3.0), abs=1e-10)

    def test_descent_restores_orthonormality(self):
        rng = np.random.default_rng(9)
        p = Parameter(rng.normal(size=(4, 8)) * 0.5, name="p")
        for _ in range(500):
            loss = reg_loss(p)
            if loss.item() < 1e-3:
                break
            g = backward(loss, [p], accumulate=False)["p"]
            p.values -= 0.5 * loss.item() / float((g * g).sum()) * g
        assert reg_loss(p).item() < 1e-3
