import os

import pytest
import torch
from torch import nn

from config import Config
from data.datasets import DatasetHandle, register_dataset

TOY_CLASSES = 4
TOY_SHAPE = (1, 8, 8)


def make_toy(split: str = "train", n: int = 240, num_classes: int = TOY_CLASSES, seed: int = 0) -> DatasetHandle:
    """Imágenes 1×8×8: cada clase tiene un nivel de intensidad propio, más ruido."""
    g = torch.Generator().manual_seed(seed if split == "train" else seed + 1)
    labels = torch.arange(n) % num_classes
    niveles = 1.2 * (labels.float() - (num_classes - 1) / 2)
    x = 0.3 * torch.randn(n, *TOY_SHAPE, generator=g) + niveles.view(-1, 1, 1, 1)
    return DatasetHandle(name="Toy", split=split, features=x, labels=labels, num_classes=num_classes)


def _toy_loader(split, root, download):
    return make_toy(split, n=240 if split == "train" else 80)


register_dataset("Toy", _toy_loader)


class Logistic(nn.Module):
    """Regresión logística 2→2 sin BN, para cálculos a mano."""

    arch_id = "logistic"

    def __init__(self, weight=None, bias=None):
        super().__init__()
        self.num_classes = 2
        self.lin = nn.Linear(2, 2)
        with torch.no_grad():
            if weight is not None:
                self.lin.weight.copy_(torch.as_tensor(weight, dtype=torch.float32))
            if bias is not None:
                self.lin.bias.copy_(torch.as_tensor(bias, dtype=torch.float32))

    def forward(self, x):
        return self.lin(x.flatten(1))


class TinyBN(nn.Module):
    """Conv 1→2 + BN + cabeza lineal: pocos parámetros, una capa BN."""

    arch_id = "tinybn"

    def __init__(self, num_classes: int = 3, size: int = 4):
        super().__init__()
        self.num_classes = num_classes
        self.input_shape = (1, size, size)
        self.conv = nn.Conv2d(1, 2, 3, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(2)
        self.head = nn.Linear(2, num_classes)

    def forward(self, x):
        h = torch.relu(self.bn(self.conv(x)))
        return self.head(h.mean(dim=(2, 3)))


class TinyGen(nn.Module):
    """Generador lineal z → 1×size×size, sin BN."""

    def __init__(self, noise_dim: int = 3, size: int = 4):
        super().__init__()
        self.noise_dim = noise_dim
        self.output_shape = (1, size, size)
        self.lin = nn.Linear(noise_dim, size * size)

    def forward(self, z):
        return torch.tanh(self.lin(z)).view(z.shape[0], *self.output_shape)


@pytest.fixture
def toy_train():
    return make_toy("train")


@pytest.fixture
def toy_test():
    return make_toy("test", n=80)


@pytest.fixture
def app(tmp_path):
    from app import create_app

    class TestConfig(Config):
        TESTING = True
        RESULTS_DIR = str(tmp_path / "results")
        RESULTS_STORE = str(tmp_path / "results" / "results.jsonl")
        DEVICE = "cpu"
        WORKERS = 1

    return create_app(TestConfig)


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def client(app):
    return app.test_client()


def slow_enabled() -> bool:
    return os.getenv("FEDSYN_RUN_SLOW", "0") == "1"
