"""
训练器、优化器、评估与对照实验测试
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from crt_encoder import BaselineBranch, BranchConfig, BranchKind, FeatureMap
from crt_losses import LossWeights, pairwise_abs_cosine
from crt_trainer import (
    SGD,
    Adam,
    ModelState,
    StepRecord,
    TrainConfig,
    Trainer,
    build_model,
    compare_with_baseline,
    component_ablation,
    compute_batch_loss,
    diversity_ablation,
    embed_dataset,
    evaluate,
    heatmap_part_hits,
    part_hit_rate,
    peak_chance_rate,
    prototype_peak_cells,
    train,
)
from synthetic_data import DatasetError, Sample, SyntheticSpec, generate_dataset, sample_batch, split_classes
from tensor_autodiff import NumericalError, ShapeError, Tensor, backward


class TestBuildModel:

    def test_same_seed_same_parameters(self, tiny_branches):
        a = build_model(tiny_branches, 6, seed=1).snapshot()
        b = build_model(tiny_branches, 6, seed=1).snapshot()
        assert a.keys() == b.keys()
        for name in a:
            assert np.array_equal(a[name], b[name])

    def test_branch_init_independent_of_other_branches(self, tiny_branches):
        both = build_model(tiny_branches, 6, seed=1).snapshot()
        alone = build_model(tiny_branches[:1], 6, seed=1).snapshot()
        assert np.array_equal(both["branch1.prototypes"], alone["branch1.prototypes"])

    def test_shared_heads_counted_once(self, tiny_branches):
        shared = build_model(tiny_branches, 6, seed=1, share_head_weights=True)
        separate = build_model(tiny_branches, 6, seed=1)
        assert shared.parameter_count() < separate.parameter_count()
        names = [name for name, _ in shared.named_parameters()]
        assert "branch2.heads.0.w1" not in names
        assert "branch2.heads.0.w2" in names

    def test_branch_lookup(self, tiny_model):
        assert tiny_model.branch("branch2") is tiny_model.branches[1]
        with pytest.raises(KeyError):
            tiny_model.branch("missing")

    def test_duplicate_branch_names_rejected(self):
        cfg = BranchConfig(name="same", num_prototypes=2, hidden_dim=3, embed_dim=3)
        with pytest.raises(ShapeError):
            build_model([cfg, cfg], 4, seed=0)

    def test_loss_weights_follow_branch_configs(self, tiny_model):
        weights = tiny_model.loss_weights(LossWeights())
        assert weights.branch_ms_weights == [1.0, 0.1]


class TestComputeBatchLoss:

    def test_breakdown_matches_total(self, tiny_model, tiny_split, rng):
        batch = sample_batch(tiny_split.train, 3, 2, rng)
        weights = tiny_model.loss_weights(LossWeights())
        loss = compute_batch_loss(tiny_model, batch.features_tensor(), batch.labels, weights)
        expected = (loss.l_div + loss.l_ms1 * 1.0 + loss.l_ms2 * 0.1
                    + loss.l_con * weights.consistency_weight)
        assert loss.total.item() == pytest.approx(expected)
        assert len(loss.ms) == 2

    def test_single_branch_has_no_consistency(self, tiny_branches, tiny_split, rng):
        model = build_model(tiny_branches[:1], 6, seed=0)
        batch = sample_batch(tiny_split.train, 3, 2, rng)
        loss = compute_batch_loss(model, batch.features_tensor(), batch.labels,
                                  model.loss_weights(LossWeights()))
        assert loss.l_con == 0.0
        assert loss.l_ms2 == 0.0

    def test_gradients_reach_prototypes(self, tiny_model, tiny_split, rng):
        batch = sample_batch(tiny_split.train, 3, 2, rng)
        loss = compute_batch_loss(tiny_model, batch.features_tensor(), batch.labels,
                                  tiny_model.loss_weights(LossWeights()))
        grads = backward(loss.total)
        prototypes = tiny_model.branches[0].prototypes.prototypes
        assert np.any(grads[prototypes] != 0.0)


class TestTrainer:

    def test_zero_epochs_is_noop(self, tiny_model, tiny_split):
        before = tiny_model.snapshot()
        model, history = train(tiny_model, tiny_split.train, TrainConfig(epochs=0, progress=False))
        assert history == []
        for name, value in model.snapshot().items():
            assert np.array_equal(value, before[name])

    def test_history_length_and_steps(self, tiny_model, tiny_split, tiny_train_config):
        _, history = train(tiny_model, tiny_split.train, tiny_train_config)
        assert [r.step for r in history] == [1, 2, 3, 4, 5, 6]
        assert all(np.isfinite(r.loss) for r in history)

    def test_deterministic_per_seed(self, tiny_branches, tiny_split, tiny_train_config):
        runs = []
        for _ in range(2):
            model = build_model(tiny_branches, 6, seed=tiny_train_config.seed)
            _, history = train(model, tiny_split.train, tiny_train_config)
            runs.append([r.loss for r in history])
        assert runs[0] == runs[1]

    def test_parameters_change(self, tiny_model, tiny_split, tiny_train_config):
        before = tiny_model.snapshot()
        model, _ = train(tiny_model, tiny_split.train, tiny_train_config)
        assert not np.array_equal(model.snapshot()["branch1.prototypes"], before["branch1.prototypes"])

    def test_diversity_only_step_spreads_prototypes(self, tiny_split):
        branches = [
            BranchConfig(name="branch1", num_prototypes=4, hidden_dim=3, embed_dim=3, ms_weight=0.0),
            BranchConfig(name="branch2", num_prototypes=4, hidden_dim=3, embed_dim=3, ms_weight=0.0),
        ]
        model = build_model(branches, 6, seed=11)
        before = [pairwise_abs_cosine(b.prototypes) for b in model.crt_branches]
        config = TrainConfig(epochs=1, steps_per_epoch=1, optimizer="sgd", learning_rate=0.01,
                             classes_per_batch=2, samples_per_class=2, progress=False,
                             loss=LossWeights(consistency_weight=0.0))
        _, history = train(model, tiny_split.train, config)
        after = [pairwise_abs_cosine(b.prototypes) for b in model.crt_branches]
        assert len(history) == 1
        assert sum(after) < sum(before)

    def test_primary_branch_independent_of_second_without_consistency(self, tiny_split, tiny_train_config):
        config = tiny_train_config.model_copy(update={"loss": LossWeights(consistency_weight=0.0)})
        primary = BranchConfig(name="branch1", num_prototypes=3, hidden_dim=5, embed_dim=4)
        snapshots = []
        for second in (BranchConfig(name="branch2", num_prototypes=4, hidden_dim=5, embed_dim=6),
                       BranchConfig(name="branch2", num_prototypes=2, hidden_dim=7, embed_dim=3)):
            model, _ = train(build_model([primary, second], 6, seed=3), tiny_split.train, config)
            snapshots.append({k: v for k, v in model.snapshot().items() if k.startswith("branch1.")})
        assert snapshots[0].keys() == snapshots[1].keys()
        for name, value in snapshots[0].items():
            assert np.array_equal(value, snapshots[1][name]), name

    def test_nan_loss_aborts_with_step(self, tiny_model, tiny_split, tiny_train_config):
        prototypes = tiny_model.branches[0].prototypes.prototypes
        prototypes.assign(np.full(prototypes.shape, np.nan))
        trainer = Trainer(tiny_model, tiny_train_config)
        with pytest.raises(NumericalError) as info:
            trainer.fit(tiny_split.train)
        assert info.value.step == 1

    def test_fit_until_step(self, tiny_model, tiny_split, tiny_train_config):
        trainer = Trainer(tiny_model, tiny_train_config)
        assert len(trainer.fit(tiny_split.train, until_step=2)) == 2
        assert len(trainer.fit(tiny_split.train)) == 4
        assert trainer.fit(tiny_split.train) == []

    def test_baseline_branch_trains(self, tiny_split, tiny_train_config):
        cfg = BranchConfig(name="baseline", kind=BranchKind.BASELINE, embed_dim=4)
        model = build_model([cfg], 6, seed=0)
        _, history = train(model, tiny_split.train, tiny_train_config)
        assert all(r.l_div == 0.0 for r in history)

    def test_csv_row(self):
        record = StepRecord(step=3, loss=0.5, l_div=0.1, l_ms1=0.2, l_ms2=0.3, l_con=0.25)
        assert record.to_csv_row() == "3,0.5,0.1,0.2,0.3,0.25"
        assert StepRecord.CSV_HEADER.split(",")[0] == "step"


class TestOptimizers:

    def test_sgd_update(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        SGD([("x", x)], lr=0.1).step({x: np.array([1.0, -1.0])})
        assert_allclose(x.data, [0.9, 2.1])

    def test_sgd_momentum(self):
        x = Tensor([0.0], requires_grad=True)
        opt = SGD([("x", x)], lr=1.0, momentum=0.5)
        opt.step({x: np.array([1.0])})
        opt.step({x: np.array([1.0])})
        assert_allclose(x.data, [-2.5])

    def test_adam_first_step_is_lr_sized(self):
        x = Tensor([1.0, -1.0], requires_grad=True)
        Adam([("x", x)], lr=0.01).step({x: np.array([3.0, -0.2])})
        assert_allclose(x.data, [0.99, -0.99], atol=1e-6)

    def test_shared_tensor_updated_once(self):
        x = Tensor([1.0], requires_grad=True)
        SGD([("a", x), ("b", x)], lr=0.5).step({x: np.array([1.0])})
        assert_allclose(x.data, [0.5])

    @pytest.mark.parametrize("kind", ["sgd", "adam"])
    def test_zero_learning_rate_leaves_parameters_untouched(self, tiny_model, tiny_split, kind):
        before = tiny_model.snapshot()
        config = TrainConfig(epochs=1, steps_per_epoch=2, learning_rate=0.0, optimizer=kind,
                             classes_per_batch=3, samples_per_class=2, progress=False)
        model, _ = train(tiny_model, tiny_split.train, config)
        for name, value in model.snapshot().items():
            assert np.array_equal(value, before[name]), name

    def test_missing_gradient_treated_as_zero(self):
        x = Tensor([1.0], requires_grad=True)
        SGD([("x", x)], lr=0.5).step({})
        assert_allclose(x.data, [1.0])

    def test_adam_state_round_trip(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        opt = Adam([("x", x)], lr=0.1)
        opt.step({x: np.array([0.5, 0.5])})
        y = Tensor(x.data, requires_grad=True)
        restored = Adam([("x", y)], lr=0.0)
        restored.load_state(opt.state_scalars(), opt.state_arrays())
        opt.step({x: np.array([0.1, -0.1])})
        restored.step({y: np.array([0.1, -0.1])})
        assert np.array_equal(x.data, y.data)


class TestEvaluate:

    def test_untrained_model_reports(self, tiny_model, tiny_split):
        result = evaluate(tiny_model, tiny_split.test, ks=[1, 2], train_classes=tiny_split.train_classes)
        assert [b.branch for b in result.branches] == ["branch1", "branch2"]
        assert result.primary.branch == "branch1"
        assert 0.0 <= result.primary.retrieval.recall(1) <= 1.0
        assert result.n_samples == len(tiny_split.test)
        text = result.to_text()
        assert text.startswith("n_samples=")
        assert "branch2.density=" in text

    def test_collapsed_embeddings(self, tiny_split):
        cfg = BranchConfig(name="baseline", kind=BranchKind.BASELINE, embed_dim=3)
        branch = BaselineBranch(cfg, Tensor(np.zeros((6, 3))), Tensor(np.ones(3)))
        model = ModelState(branches=[branch], feature_dim=6)
        result = evaluate(model, tiny_split.test, ks=[1])
        assert result.primary.density.density == 0.0
        assert result.primary.spectral.rho == 0.0

    def test_overlapping_classes_rejected(self, tiny_model, tiny_split):
        with pytest.raises(DatasetError):
            evaluate(tiny_model, tiny_split.test, train_classes=tiny_split.test_classes)

    def test_embed_dataset_chunks_agree(self, tiny_model, tiny_split):
        whole = embed_dataset(tiny_model, tiny_split.test, chunk=1000)
        chunked = embed_dataset(tiny_model, tiny_split.test, chunk=4)
        assert_allclose(whole, chunked, atol=1e-12)
        assert whole.shape == (len(tiny_split.test), 4)


class TestExperiments:

    def test_peak_cells(self, tiny_model, tiny_split):
        peaks = prototype_peak_cells(tiny_model, tiny_split.test.samples[0].feature_map)
        assert len(peaks) == 3
        assert all(0 <= p < 9 for p in peaks)

    def test_compare_smoke(self, tiny_spec, tiny_branches, tiny_train_config):
        config = tiny_train_config.model_copy(update={"epochs": 1})
        recall, generalization = compare_with_baseline(tiny_spec, config, tiny_branches[0], seeds=[0], ks=[1])
        assert len(recall.records) == 1
        assert {"crt_recall1", "baseline_recall1", "crt_rho"} <= set(recall.records[0])
        assert recall.to_text().startswith("recall.seeds=1")
        assert isinstance(generalization.verdict, bool)

    def test_diversity_and_heatmap_smoke(self, tiny_spec, tiny_branches, tiny_train_config):
        config = tiny_train_config.model_copy(update={"epochs": 1})
        ablation = diversity_ablation(tiny_spec, config, tiny_branches, seeds=[0])
        assert 0.0 <= ablation.records[0]["with_div_cos"] <= 1.0
        hits = heatmap_part_hits(tiny_spec, config, tiny_branches, seeds=[0])
        record = hits.records[0]
        assert 0.0 <= record["train_hit_rate"] <= 1.0
        assert 0.0 <= record["test_hit_rate"] <= 1.0
        assert record["chance_rate"] == pytest.approx(1.0 - (7 / 9) ** 3)
        assert "heatmap.seed0.chance_rate" in hits.to_text()

    def test_component_smoke(self, tiny_spec, tiny_branches, tiny_train_config):
        config = tiny_train_config.model_copy(update={"epochs": 1})
        result = component_ablation(tiny_spec, config, tiny_branches, seeds=[0], ks=[1])
        assert result.name == "component"
        assert set(result.records[0]) == {"seed", "baseline_recall1", "without_con_recall1", "with_con_recall1"}
        assert all(0.0 <= result.records[0][key] <= 1.0
                   for key in ("baseline_recall1", "without_con_recall1", "with_con_recall1"))

    def test_component_needs_two_branches(self, tiny_spec, tiny_branches, tiny_train_config):
        with pytest.raises(ValueError):
            component_ablation(tiny_spec, tiny_train_config, tiny_branches[:1], seeds=[0])

    def test_component_uses_default_weight_when_disabled(self, tiny_spec, tiny_branches, tiny_train_config):
        config = tiny_train_config.model_copy(update={"epochs": 1})
        disabled = config.model_copy(
            update={"loss": config.loss.model_copy(update={"consistency_weight": 0.0})})
        first = component_ablation(tiny_spec, config, tiny_branches, seeds=[0], ks=[1])
        second = component_ablation(tiny_spec, disabled, tiny_branches, seeds=[0], ks=[1])
        assert first.records == second.records

    def test_part_hit_rate_follows_prototype_direction(self, tiny_model):
        prototypes = tiny_model.branch(0).prototypes.prototypes
        features = np.tile(0.1 * np.eye(6)[1], (9, 1))
        features[4] = 5.0 * np.eye(6)[0]
        on_part = Sample(FeatureMap(3, 3, features), 0, part_cells=(4,))
        off_part = Sample(FeatureMap(3, 3, features), 0, part_cells=(0,))

        prototypes.assign(np.tile(np.eye(6)[0], (3, 1)))
        assert part_hit_rate(tiny_model, [on_part]) == 1.0
        assert part_hit_rate(tiny_model, [on_part, off_part]) == 0.5

        prototypes.assign(np.tile(-np.eye(6)[0], (3, 1)))
        assert part_hit_rate(tiny_model, [on_part]) == 0.0

    def test_part_hit_rate_rejects_empty(self, tiny_model):
        with pytest.raises(ValueError):
            part_hit_rate(tiny_model, [])

    def test_part_hit_rate_needs_part_cells(self, tiny_model, tiny_split):
        bare = [Sample(s.feature_map, s.label) for s in tiny_split.test.samples]
        with pytest.raises(ValueError, match="部件单元"):
            part_hit_rate(tiny_model, bare)

    @pytest.mark.parametrize("positions, parts, prototypes, expected", [
        (16, 3, 8, 1.0 - (13 / 16) ** 8),
        (9, 9, 1, 1.0),
        (9, 0, 5, 0.0),
        (4, 1, 1, 0.25),
    ])
    def test_peak_chance_rate(self, positions, parts, prototypes, expected):
        assert peak_chance_rate(positions, parts, prototypes) == pytest.approx(expected)

    def test_peak_chance_rate_rejects_too_many_parts(self):
        with pytest.raises(ValueError):
            peak_chance_rate(4, 5, 2)


@pytest.mark.slow
class TestAcceptance:
    """桌面规模的端到端对照（运行时间较长）"""

    SEEDS = [0, 1, 2, 3, 4]

    def _desk_branches(self):
        return [BranchConfig(name="branch1", num_prototypes=8, hidden_dim=32, embed_dim=32, ms_weight=1.0),
                BranchConfig(name="branch2", num_prototypes=12, hidden_dim=32, embed_dim=64, ms_weight=0.1)]

    def test_training_improves_recall(self):
        wins = 0
        for seed in self.SEEDS:
            split = split_classes(generate_dataset(SyntheticSpec(seed=seed)), 0.5, seed=seed)
            model = build_model(self._desk_branches(), split.train.feature_dim, seed)
            untrained = evaluate(model, split.test).primary.retrieval.recall(1)
            trained_model, _ = train(model, split.train, TrainConfig(seed=seed, progress=False))
            trained = evaluate(trained_model, split.test).primary.retrieval.recall(1)
            wins += int(trained > untrained)
        assert wins >= 4

    def test_crt_beats_pooled_baseline(self):
        recall, _ = compare_with_baseline(SyntheticSpec(), TrainConfig(progress=False),
                                          self._desk_branches()[0], seeds=self.SEEDS)
        assert recall.verdict

    def test_diversity_term_spreads_prototypes(self):
        result = diversity_ablation(SyntheticSpec(), TrainConfig(progress=False),
                                    self._desk_branches(), seeds=self.SEEDS)
        assert result.verdict

    def test_consistency_term_improves_recall(self):
        result = component_ablation(SyntheticSpec(), TrainConfig(progress=False),
                                    self._desk_branches(), seeds=self.SEEDS)
        assert len(result.records) == len(self.SEEDS)
        assert result.verdict

    def test_mean_loss_decreases_over_training(self):
        wins = 0
        for seed in self.SEEDS:
            split = split_classes(generate_dataset(SyntheticSpec(seed=seed)), 0.5, seed=seed)
            config = TrainConfig(seed=seed, progress=False)
            _, history = train(build_model(self._desk_branches(), split.train.feature_dim, seed),
                               split.train, config)
            first = np.mean([r.loss for r in history[:config.steps_per_epoch]])
            last = np.mean([r.loss for r in history[-config.steps_per_epoch:]])
            wins += int(last < first)
        assert wins >= 3

    def test_prototype_peaks_land_on_parts(self):
        result = heatmap_part_hits(SyntheticSpec(), TrainConfig(progress=False),
                                   self._desk_branches(), seeds=self.SEEDS)
        assert result.verdict
