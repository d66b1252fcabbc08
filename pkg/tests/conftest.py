import numpy as np
import pytest

from specforce_diffusion.gen_tools.data.signals import LabelVocabulary
from specforce_diffusion.gen_tools.data.toy import toy_dataset
from specforce_diffusion.gen_tools.embedding.delay_embedding import EmbeddingCodec, EmbeddingParams
from specforce_diffusion.gen_tools.models.unet import BackboneConfig
from specforce_diffusion.gen_tools.tensor.tensor import default_dtype, set_default_dtype, set_nonfinite_trap
from specforce_diffusion.gen_tools.utils.log_manager import get_log_manager

TINY_CONFIG = """
[run]
seed = 3
log_level = WARNING
progress = false

[embedding]
m = 8
n = 16
length = 64
target_height = 16
target_width = 8

[diffusion]
steps = 3
batch_size = 16
epochs = 2
checkpoint_every = 1
sample_batch_size = 8
learning_rate = 0.001

[backbone]
model_channels = 8
channel_multipliers = 1,2

[classifier]
batch_size = 16
max_epochs = 3
patience = 2
filters = 4,8
hidden = 16
adaptive_size = 2

[data]
window = 64
drop = 0
toy_per_class = 12

[evaluation]
bins = 20
tsne_points = 32
perplexity = 3
tsne_iterations = 60
batch_size = 16
"""


@pytest.fixture(autouse=True)
def engine_defaults():
    """Every test starts from the engine's process defaults."""
    set_default_dtype("float32")
    set_nonfinite_trap(False)
    get_log_manager().configure(None)
    yield
    set_default_dtype("float32")
    set_nonfinite_trap(False)
    get_log_manager().configure(None)


@pytest.fixture
def float64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def vocabulary():
    return LabelVocabulary()


@pytest.fixture(scope="session")
def toy_windows():
    """48 raw toy windows of length 64, 12 per class."""
    return toy_dataset(seed=11, per_class=12, length=64)


@pytest.fixture
def tiny_codec():
    # 16 x 6 delay matrix padded to 16 x 8
    return EmbeddingCodec(EmbeddingParams(m=8, n=16, length=64), target_height=16, target_width=8)


@pytest.fixture
def tiny_backbone():
    return BackboneConfig(num_classes=4, channels=3, height=16, width=8, model_channels=8,
                          channel_multipliers=(1, 2))


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return path
