# models/base.py
from contextlib import contextmanager
from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn.modules.batchnorm import _BatchNorm
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from errors import ShapeMismatchError


def scaled(canales: int, width: float) -> int:
    """Ancho de capa escalado (variantes desk usan width=0.5)."""
    return max(1, int(round(canales * width)))


# ============================================================
# 🧠 CLASE BASE DEL ZOO
# ============================================================

class ZooModel(nn.Module):
    """Clasificador con salida de logits, vista plana de parámetros y capas BN inspeccionables."""

    arch_id = "base"

    def __init__(self, num_classes: int, in_channels: int = 3, image_size: int = 32, width: float = 1.0):
        super().__init__()
        self.num_classes = num_classes
        self.input_shape = (in_channels, image_size, image_size)
        self.width = width
        self.seed = None

    def flat_parameters(self) -> torch.Tensor:
        return parameters_to_vector(self.parameters()).detach().clone()

    def load_flat_parameters(self, vector: torch.Tensor) -> None:
        total = sum(p.numel() for p in self.parameters())
        if vector.numel() != total:
            raise ShapeMismatchError(f"Vector de {vector.numel()} valores para {total} parámetros")
        with torch.no_grad():
            vector_to_parameters(vector, self.parameters())

    def bn_layers(self) -> list:
        return bn_layers(self)


def arch_of(model: nn.Module) -> str:
    return getattr(model, "arch_id", type(model).__name__)


def model_device(model: nn.Module) -> torch.device:
    for t in model.parameters():
        return t.device
    for t in model.buffers():
        return t.device
    return torch.device("cpu")


def bn_layers(model: nn.Module) -> list:
    """Capas BN en orden de registro; ese orden indexa la captura de estadísticas."""
    return [m for m in model.modules() if isinstance(m, _BatchNorm)]


def bn_layer_shapes(model: nn.Module) -> list:
    return [int(m.num_features) for m in bn_layers(model)]


# ============================================================
# 📊 CAPTURA DE ESTADÍSTICAS DE BATCH
# ============================================================

@dataclass
class BatchStatsCapture:
    """Media y varianza (sesgada) de la entrada de cada capa BN durante un forward."""

    means: list = field(default_factory=list)
    variances: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.means)


def batch_stats(x: torch.Tensor):
    dims = [d for d in range(x.dim()) if d != 1]
    return x.mean(dim=dims), x.var(dim=dims, correction=0)


@contextmanager
def capture_bn_stats(model: nn.Module):
    capas = bn_layers(model)
    captura = BatchStatsCapture(means=[None] * len(capas), variances=[None] * len(capas))

    def hook_para(l):
        def hook(_modulo, entradas):
            mu, var = batch_stats(entradas[0])
            captura.means[l] = mu
            captura.variances[l] = var
        return hook

    handles = [capa.register_forward_pre_hook(hook_para(l)) for l, capa in enumerate(capas)]
    try:
        yield captura
    finally:
        for h in handles:
            h.remove()


def forward_logits(model: nn.Module, batch: torch.Tensor, capture_stats: bool = False):
    """
    Forward en modo inferencia (BN normaliza con sus estadísticas guardadas).

    Devuelve (logits b×C, BatchStatsCapture | None). No desactiva el grafo:
    si `batch` depende de parámetros del generador, el gradiente fluye.
    """
    esperado = getattr(model, "input_shape", None)
    if esperado is not None and tuple(batch.shape[1:]) != tuple(esperado):
        raise ShapeMismatchError(
            f"Batch {tuple(batch.shape[1:])} no coincide con la entrada {tuple(esperado)} de {arch_of(model)}"
        )

    model.eval()
    if not capture_stats:
        return model(batch), None

    with capture_bn_stats(model) as captura:
        logits = model(batch)
    return logits, captura
