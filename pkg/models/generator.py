# models/generator.py
import math
from contextlib import contextmanager

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.modules.batchnorm import _BatchNorm

from errors import NonFiniteError, ShapeMismatchError
from models.base import scaled


def _bn(canales: int) -> nn.BatchNorm2d:
    return nn.BatchNorm2d(canales)


class Generator(nn.Module):
    """
    Generador convolucional incondicional x̂ = G(z).

    Proyección lineal de z a un mapa de baja resolución y dos etapas de
    upsampling conv-BN-activación hasta la resolución del dataset. La salida
    pasa por tanh, se lleva a [0, 1] y se normaliza con la media/desvío del
    dataset, así queda en el mismo rango que los datos reales.
    """

    def __init__(self, noise_dim: int, output_shape, mean, std, width: float = 1.0):
        super().__init__()
        canales, alto, ancho = output_shape
        self.noise_dim = noise_dim
        self.output_shape = (canales, alto, ancho)

        c = scaled(128, width)
        self.init_size = (math.ceil(alto / 4), math.ceil(ancho / 4))
        self.mid_size = (math.ceil(alto / 2), math.ceil(ancho / 2))

        self.l1 = nn.Linear(noise_dim, c * self.init_size[0] * self.init_size[1])
        self.conv_blocks0 = nn.Sequential(_bn(c))
        self.conv_blocks1 = nn.Sequential(
            nn.Conv2d(c, c, 3, stride=1, padding=1),
            _bn(c),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.conv_blocks2 = nn.Sequential(
            nn.Conv2d(c, c // 2, 3, stride=1, padding=1),
            _bn(c // 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c // 2, canales, 3, stride=1, padding=1),
            nn.Tanh(),
        )

        self.register_buffer("mean", torch.tensor(mean, dtype=torch.float32).view(1, -1, 1, 1))
        self.register_buffer("std", torch.tensor(std, dtype=torch.float32).view(1, -1, 1, 1))

    def forward(self, z):
        out = self.l1(z.flatten(1))
        out = out.view(out.shape[0], -1, *self.init_size)
        out = self.conv_blocks0(out)
        out = F.interpolate(out, size=self.mid_size)
        out = self.conv_blocks1(out)
        out = F.interpolate(out, size=self.output_shape[1:])
        out = self.conv_blocks2(out)
        pix = (out + 1) / 2
        return (pix - self.mean) / self.std


def generate(gen: nn.Module, z: torch.Tensor) -> torch.Tensor:
    """
    x̂ = G(z) con validación de z; b=0 devuelve un batch vacío.

    En modo train las BN normalizan con el batch (y actualizan sus running
    stats); en modo eval usan las running stats y cada fila depende solo de su z.
    """
    noise_dim = getattr(gen, "noise_dim", z.shape[-1])
    if z.dim() != 2 or z.shape[1] != noise_dim:
        raise ShapeMismatchError(f"z de forma {tuple(z.shape)}; se esperaba b×{noise_dim}")
    if not torch.isfinite(z).all():
        raise NonFiniteError("z contiene valores no finitos")

    if z.shape[0] == 0:
        forma = getattr(gen, "output_shape", None)
        if forma is None:
            return gen(z)
        ref = next(gen.parameters())
        return torch.empty((0, *forma), dtype=ref.dtype, device=ref.device)

    return gen(z)


@contextmanager
def frozen_bn_stats(gen: nn.Module):
    """Forward con estadísticas del batch sin tocar las running stats de G."""
    capas = [m for m in gen.modules() if isinstance(m, _BatchNorm)]
    previo = [m.track_running_stats for m in capas]
    for m in capas:
        # con track_running_stats=False y training=True, BN no recibe los buffers
        m.track_running_stats = False
    try:
        yield gen
    finally:
        for m, valor in zip(capas, previo):
            m.track_running_stats = valor
