"""
共享测试夹具
"""

import numpy as np
import pytest

from crt_encoder import BranchConfig
from crt_trainer import TrainConfig, build_model
from synthetic_data import SyntheticSpec, generate_dataset, split_classes
from tensor_autodiff import get_tape


@pytest.fixture(autouse=True)
def fresh_tape():
    """每个测试开始前清空当前线程的计算带"""
    get_tape().clear()
    yield
    get_tape().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(n_classes=6, samples_per_class=6, height=3, width=3, feature_dim=6,
                         class_sep=3.0, noise_sigma=0.3, part_count=2, seed=3)


@pytest.fixture
def tiny_split(tiny_spec):
    return split_classes(generate_dataset(tiny_spec), 0.5)


@pytest.fixture
def tiny_branches():
    return [
        BranchConfig(name="branch1", num_prototypes=3, hidden_dim=5, embed_dim=4, ms_weight=1.0),
        BranchConfig(name="branch2", num_prototypes=4, hidden_dim=5, embed_dim=6, ms_weight=0.1),
    ]


@pytest.fixture
def tiny_model(tiny_branches, tiny_spec):
    return build_model(tiny_branches, tiny_spec.feature_dim, seed=3)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(epochs=2, steps_per_epoch=3, classes_per_batch=3, samples_per_class=2,
                       progress=False, seed=3)
