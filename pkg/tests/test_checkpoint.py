"""
检查点测试
"""

import numpy as np
import pytest

from crt_trainer import CheckpointError, Trainer, build_model, load_checkpoint, save_checkpoint


class TestCheckpoint:

    def test_resume_is_bit_exact(self, tmp_path, tiny_branches, tiny_split, tiny_train_config):
        straight = Trainer(build_model(tiny_branches, 6, seed=3), tiny_train_config)
        full = [r.loss for r in straight.fit(tiny_split.train)]

        first = Trainer(build_model(tiny_branches, 6, seed=3), tiny_train_config)
        head = [r.loss for r in first.fit(tiny_split.train, until_step=3)]
        path = first.save_checkpoint(tmp_path / "checkpoint.bin")

        resumed = Trainer.from_checkpoint(path)
        assert resumed.step == 3
        tail = [r.loss for r in resumed.fit(tiny_split.train)]
        assert head + tail == full

    def test_parameters_restored(self, tmp_path, tiny_model, tiny_train_config):
        trainer = Trainer(tiny_model, tiny_train_config)
        save_checkpoint(tmp_path / "checkpoint.bin", trainer)
        restored = load_checkpoint(tmp_path / "checkpoint.bin")
        before = tiny_model.snapshot()
        after = restored.model.snapshot()
        assert before.keys() == after.keys()
        for name in before:
            assert np.array_equal(before[name], after[name])
        assert restored.model.branch_configs == tiny_model.branch_configs
        assert restored.config == tiny_train_config

    def test_shared_heads_stay_shared(self, tmp_path, tiny_branches, tiny_train_config):
        model = build_model(tiny_branches, 6, seed=3, share_head_weights=True)
        path = save_checkpoint(tmp_path / "checkpoint.bin", Trainer(model, tiny_train_config))
        restored = load_checkpoint(path).model
        assert restored.branches[1].heads[0].w1 is restored.branches[0].heads[0].w1

    def test_sgd_momentum_state(self, tmp_path, tiny_branches, tiny_split, tiny_train_config):
        config = tiny_train_config.model_copy(update={"optimizer": "sgd", "momentum": 0.9,
                                                      "learning_rate": 0.01})
        straight = Trainer(build_model(tiny_branches, 6, seed=3), config)
        full = [r.loss for r in straight.fit(tiny_split.train)]
        first = Trainer(build_model(tiny_branches, 6, seed=3), config)
        head = [r.loss for r in first.fit(tiny_split.train, until_step=2)]
        resumed = Trainer.from_checkpoint(first.save_checkpoint(tmp_path / "ckpt.bin"))
        assert head + [r.loss for r in resumed.fit(tiny_split.train)] == full

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "missing.bin")

    def test_corruption_detected(self, tmp_path, tiny_model, tiny_train_config):
        path = save_checkpoint(tmp_path / "checkpoint.bin", Trainer(tiny_model, tiny_train_config))
        raw = bytearray(path.read_bytes())
        raw[-20] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(b"CRTCKPT")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
