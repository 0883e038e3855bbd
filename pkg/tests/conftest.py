import numpy as np
import pytest
import torch
from skimage import data as skdata

from recoproc import synthetic
from recoproc.data import load_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def natural_image():
    """64x64 crop of a standard colour photograph, float32 in [0, 1]."""
    img = skdata.astronaut()[100:228:2, 180:308:2]
    return (img.astype(np.float32) / 255.0)


@pytest.fixture(scope="session")
def tiny_root(tmp_path_factory):
    """Four-class shape dataset: 12 train and 6 val images per class."""
    root = tmp_path_factory.mktemp("tiny_ds")
    synthetic.generate(root, num_classes=4, train_per_class=12, val_per_class=6, seed=3)
    return root


@pytest.fixture(scope="session")
def tiny_train(tiny_root):
    return load_dataset(tiny_root, "train")


@pytest.fixture(scope="session")
def tiny_val(tiny_root):
    return load_dataset(tiny_root, "val")


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
