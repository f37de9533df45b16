# models/zoo.py
import torch

from errors import UnknownArchitectureError
from models.cnn import CNN1, CNN2
from models.generator import Generator
from models.resnet import ResNet18
from models.wrn import WRN16_1, WRN40_1

ARCHITECTURES = {
    cls.arch_id: cls
    for cls in (ResNet18, CNN1, CNN2, WRN16_1, WRN40_1)
}

DEFAULT_NOISE_DIM = 100


def build_model(
    arch_id: str,
    num_classes: int,
    seed: int,
    in_channels: int = 3,
    image_size: int = 32,
    width: float = 1.0,
):
    """Modelo recién inicializado; mismo seed → parámetros idénticos bit a bit."""
    if arch_id not in ARCHITECTURES:
        raise UnknownArchitectureError(
            f"Arquitectura desconocida: {arch_id}. Disponibles: {sorted(ARCHITECTURES)}"
        )

    # fork_rng aísla la inicialización del RNG global
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ARCHITECTURES[arch_id](
            num_classes=num_classes,
            in_channels=in_channels,
            image_size=image_size,
            width=width,
        )
    model.seed = seed
    return model


def build_generator(noise_dim: int, output_shape, mean, std, seed: int, width: float = 1.0) -> Generator:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return Generator(noise_dim, output_shape, mean, std, width=width)


def build_for_dataset(arch_id: str, data, seed: int, width: float = 1.0):
    """Atajo: toma canales, resolución y clases del DatasetHandle."""
    canales, alto, _ = data.input_shape
    return build_model(arch_id, data.num_classes, seed, in_channels=canales, image_size=alto, width=width)
