"""Tests for frozen-encoder transfer evaluation."""

import numpy as np
import pytest

from src.dataset import DatasetReader
from src.encoder import EncoderState, checksum, load_checkpoint
from src.errors import ConfigError, ContractError
from src.objectives import TAU_GRID, LossWeights
from src.pretrain import TrainConfig
from src.transfer import (
    AblationConfig,
    Features,
    TaskSet,
    TransferMatrix,
    ablation_cells,
    build_task_set,
    dump_reconstructions,
    encode_samples,
    evaluate,
    export_embeddings,
    fit_head,
    hash_seed,
    pair_transfer,
    run_scratch_transfer,
    run_transfer,
    train_head,
    transfer_performance,
)


@pytest.fixture(scope="module")
def frozen(micro_checkpoint):
    return load_checkpoint(micro_checkpoint)


@pytest.fixture(scope="module")
def eval_reader(micro_dataset, frozen):
    return DatasetReader(micro_dataset, stats=frozen.stats)


def brute_force_summary(a: np.ndarray) -> tuple[float, float]:
    n = a.shape[0]
    off = [a[i, j] for i in range(n) for j in range(n) if i != j]
    return sum(off) / len(off), sum(a[i, i] for i in range(n)) / n


class TestTransferPerformance:
    def test_two_sensor_example(self):
        m = TransferMatrix(["a", "b"], [[0.9, 0.6], [0.5, 0.8]], "accuracy")
        s = transfer_performance(m)
        assert s.transfer == pytest.approx(0.55)
        assert s.no_transfer == pytest.approx(0.85)
        assert s.n_sensors == 2

    def test_random_matrices(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(2, 8))
            a = rng.uniform(0, 1, (n, n))
            s = transfer_performance(TransferMatrix([str(i) for i in range(n)], a, "accuracy"))
            transfer, no_transfer = brute_force_summary(a)
            assert s.transfer == pytest.approx(transfer, abs=1e-12)
            assert s.no_transfer == pytest.approx(no_transfer, abs=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 1, (5, 5))
        p = rng.permutation(5)
        ids = list("abcde")
        s1 = transfer_performance(TransferMatrix(ids, a, "rmse"))
        s2 = transfer_performance(TransferMatrix([ids[i] for i in p], a[np.ix_(p, p)], "rmse"))
        assert s1.transfer == pytest.approx(s2.transfer, abs=1e-12)
        assert s1.no_transfer == pytest.approx(s2.no_transfer, abs=1e-12)

    def test_units(self):
        d = transfer_performance(TransferMatrix(["a", "b"], np.ones((2, 2)), "rmse")).to_dict()
        assert d["units"] == "mm"
        assert d["metric_kind"] == "rmse"

    def test_single_sensor(self):
        with pytest.raises(ContractError):
            transfer_performance(TransferMatrix(["a"], [[1.0]], "accuracy"))

    def test_unpopulated_cell(self):
        with pytest.raises(ContractError):
            transfer_performance(TransferMatrix(["a", "b"], [[1.0, np.nan], [0.5, 1.0]], "accuracy"))

    def test_dims_mismatch(self):
        with pytest.raises(ConfigError):
            TransferMatrix(["a", "b", "c"], np.zeros((2, 2)), "accuracy")

    def test_pair_transfer(self):
        m = TransferMatrix(["a", "b", "c"], [[1, 0.2, 0.4], [0.6, 1, 0.1], [0.3, 0.5, 1]], "accuracy")
        assert pair_transfer(m, 0, 1) == pytest.approx(0.4)
        assert pair_transfer(m, 2, 1) == pytest.approx(0.3)
        with pytest.raises(ConfigError):
            pair_transfer(m, 1, 1)


class TestTaskSets:
    def test_classification(self, micro_reader):
        ts = build_task_set("classification", micro_reader.manifest, "sim-000", "train")
        assert len(ts) == len(micro_reader.manifest.contacts_in("train"))
        assert ts.targets.dtype == np.int64

    def test_pose_pairs_share_indenter(self, micro_reader):
        manifest = micro_reader.manifest
        ts = build_task_set("pose", manifest, "sim-000", "train")
        assert len(ts) > 0
        for (i, j), delta in zip(ts.rows, ts.targets):
            a, b = manifest.contact(ts.contact_ids[i]), manifest.contact(ts.contact_ids[j])
            assert a.indenter_id == b.indenter_id and i != j
            np.testing.assert_allclose(delta, np.subtract(b.pose_mm, a.pose_mm), rtol=1e-6)

    def test_pose_test_split_has_pairs(self, micro_reader):
        assert len(build_task_set("pose", micro_reader.manifest, "sim-001", "test")) > 0

    def test_unknown_task(self, micro_reader):
        with pytest.raises(ConfigError):
            build_task_set("depth", micro_reader.manifest, "sim-000")

    def test_unknown_sensor(self, micro_reader):
        with pytest.raises(ContractError):
            build_task_set("classification", micro_reader.manifest, "ghost")


class TestHeads:
    def test_duplicated_images_fit_exactly(self):
        # one fixed feature per class; a head must separate them perfectly
        rng = np.random.default_rng(0)
        base_z = rng.standard_normal((3, 16)).astype(np.float32)
        base_t = rng.standard_normal((3, 4, 16)).astype(np.float32)
        labels = np.repeat(np.arange(3), 6)
        features = Features(base_z[labels], base_t[labels])
        ts = TaskSet("classification", "s", [f"c{i}" for i in range(18)], np.arange(18), labels)
        run = fit_head(ts, features, n_classes=3, epochs=150, seed=0)
        assert run.train_metric == 1.0
        assert evaluate(run.head, ts, features) == 1.0

    def test_empty_task_set(self):
        ts = TaskSet("classification", "s", [], np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        features = Features(np.zeros((0, 16), np.float32), np.zeros((0, 4, 16), np.float32))
        with pytest.raises(ContractError):
            fit_head(ts, features, 3, epochs=1, seed=0)

    def test_zero_epochs(self):
        ts = TaskSet("classification", "s", ["c"], np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))
        features = Features(np.zeros((1, 16), np.float32), np.zeros((1, 4, 16), np.float32))
        with pytest.raises(ConfigError):
            fit_head(ts, features, 3, epochs=0, seed=0)

    def test_train_head_leaves_encoder_unchanged(self, frozen, eval_reader):
        before = checksum(frozen.state)
        run = train_head("classification", frozen.state, eval_reader, "sim-000", epochs=2, seed=0,
                         calib_mode="k4")
        assert len(run.history) == 2
        assert checksum(frozen.state) == before

    def test_encode_samples_shapes(self, frozen, eval_reader):
        feats = encode_samples(frozen.state, eval_reader, "sim-002", ["c00000", "c00001", "c00002"], "k4")
        assert feats.z.shape == (3, 32)
        assert feats.tokens.shape == (3, 16, 32)

    def test_encode_samples_batching_invariant(self, frozen, eval_reader):
        ids = ["c00000", "c00001", "c00002"]
        a = encode_samples(frozen.state, eval_reader, "sim-000", ids, "k4", batch_size=1)
        b = encode_samples(frozen.state, eval_reader, "sim-000", ids, "k4", batch_size=3)
        np.testing.assert_allclose(a.z, b.z, rtol=1e-4, atol=1e-5)


class TestRunTransfer:
    def test_classification_matrix(self, frozen, eval_reader):
        m = run_transfer("classification", frozen.state, eval_reader, epochs=2, seed=0, calib_mode="k4")
        assert m.scores.shape == (4, 4)
        assert m.metric_kind == "accuracy"
        assert np.all((m.scores >= 0) & (m.scores <= 1))

    def test_pose_matrix(self, frozen, eval_reader):
        m = run_transfer("pose", frozen.state, eval_reader, epochs=2, seed=0, calib_mode="k4",
                         sensor_ids=["sim-000", "sim-001"])
        assert m.scores.shape == (2, 2)
        assert m.metric_kind == "rmse"
        assert np.all(m.scores >= 0)

    def test_threads_do_not_change_scores(self, frozen, eval_reader):
        ids = ["sim-000", "sim-001", "sim-002"]
        a = run_transfer("classification", frozen.state, eval_reader, 2, 3, "k4", threads=1, sensor_ids=ids)
        b = run_transfer("classification", frozen.state, eval_reader, 2, 3, "k4", threads=3, sensor_ids=ids)
        np.testing.assert_array_equal(a.scores, b.scores)

    def test_unknown_task(self, frozen, eval_reader):
        with pytest.raises(ConfigError):
            run_transfer("depth", frozen.state, eval_reader, 1, 0)

    def test_hash_seed(self):
        assert hash_seed(0, 1) == hash_seed(0, 1)
        assert hash_seed(0, 1) != hash_seed(0, 2)

    def test_scratch_baseline(self, eval_reader, tiny_encoder_config):
        m = run_scratch_transfer("classification", tiny_encoder_config, eval_reader, epochs=1, seed=0,
                                 calib_mode="k4", sensor_ids=["sim-000", "sim-001"])
        assert m.scores.shape == (2, 2)


class TestExports:
    def test_embeddings(self, frozen, eval_reader, tmp_path):
        text = export_embeddings(frozen.state, eval_reader, tmp_path / "embeddings.csv", "k4")
        lines = text.splitlines()
        assert len(lines) == 1 + 64
        assert lines[0].split(",")[:4] == ["sensor_id", "contact_id", "label", "e0"]
        values = np.array([float(v) for v in lines[1].split(",")[3:]])
        assert values.size == 128
        assert np.linalg.norm(values) == pytest.approx(1.0, rel=1e-4)

    def test_reconstructions(self, frozen, eval_reader, tmp_path):
        stems = dump_reconstructions(frozen.state, eval_reader, tmp_path, count=2, calib_mode="k4")
        assert len(stems) == 2
        for stem in stems:
            assert stem.with_name(stem.name + "_normal.tnsr").is_file()
            assert stem.with_name(stem.name + "_height.tnsr").is_file()
            assert stem.with_name(stem.name + "_height.png").is_file()


class TestAblation:
    def test_cell_counts(self):
        base = TrainConfig()
        assert [v for v, _ in ablation_cells("calib", base)] == ["k0", "k4", "k9", "k8", "k18"]
        assert len(ablation_cells("tau", base)) == len(TAU_GRID)
        assert [v for v, _ in ablation_cells("loss", base)] == ["normal_only", "scl_only", "both"]

    def test_loss_axis_weights(self):
        cells = dict(ablation_cells("loss", TrainConfig(weights=LossWeights(tau=0.1))))
        assert cells["normal_only"].weights.lambda_scl == 0.0
        assert cells["scl_only"].weights.lambda_normal == 0.0
        assert cells["both"].weights.tau == 0.1

    def test_tau_axis(self):
        taus = [cfg.weights.tau for _, cfg in ablation_cells("tau", TrainConfig())]
        assert taus == list(TAU_GRID)

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            ablation_cells("depth", TrainConfig())

    def test_encoder_config_follows_calib(self):
        cfg = AblationConfig(train=TrainConfig(), image_size=32, embed_dim=32, num_heads=2, depth=1)
        assert cfg.encoder_config("k9").calib_count == 9
        assert cfg.encoder_config("k0").calib_count == 0

    def test_fresh_state_differs_from_checkpoint(self, frozen):
        fresh = EncoderState.initialize(frozen.state.config, seed=0)
        assert checksum(fresh) != checksum(frozen.state)
