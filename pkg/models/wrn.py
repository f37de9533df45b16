# models/wrn.py
import torch.nn.functional as F
from torch import nn

from models.base import ZooModel, scaled


class WideBlock(nn.Module):
    def __init__(self, entrada: int, salida: int, stride: int):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(entrada)
        self.conv1 = nn.Conv2d(entrada, salida, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(salida)
        self.conv2 = nn.Conv2d(salida, salida, 3, stride=1, padding=1, bias=False)
        self.igual = entrada == salida
        self.shortcut = None if self.igual else nn.Conv2d(entrada, salida, 1, stride=stride, bias=False)

    def forward(self, x):
        o = F.relu(self.bn1(x))
        y = self.conv1(o)
        y = self.conv2(F.relu(self.bn2(y)))
        return y + (x if self.igual else self.shortcut(o))


class WideResNet(ZooModel):
    """WRN-depth-k pre-activación; depth = 6n + 4."""

    def __init__(
        self,
        num_classes: int,
        in_channels: int = 3,
        image_size: int = 32,
        width: float = 1.0,
        depth: int = 16,
        widen: int = 1,
    ):
        super().__init__(num_classes, in_channels, image_size, width)
        if (depth - 4) % 6:
            raise ValueError(f"Profundidad WRN inválida: {depth}")
        n = (depth - 4) // 6
        canales = [scaled(c, width) for c in (16, 16 * widen, 32 * widen, 64 * widen)]

        self.conv1 = nn.Conv2d(in_channels, canales[0], 3, stride=1, padding=1, bias=False)
        grupos = []
        entrada = canales[0]
        for g, salida in enumerate(canales[1:]):
            stride = 1 if g == 0 else 2
            bloques = [WideBlock(entrada if i == 0 else salida, salida, stride if i == 0 else 1) for i in range(n)]
            grupos.append(nn.Sequential(*bloques))
            entrada = salida
        self.block1, self.block2, self.block3 = grupos
        self.bn = nn.BatchNorm2d(canales[-1])
        self.fc = nn.Linear(canales[-1], num_classes)

    def forward(self, x):
        out = self.block3(self.block2(self.block1(self.conv1(x))))
        out = F.relu(self.bn(out))
        out = F.adaptive_avg_pool2d(out, 1).flatten(1)
        return self.fc(out)


class WRN16_1(WideResNet):
    arch_id = "wrn16_1"

    def __init__(self, num_classes: int, in_channels: int = 3, image_size: int = 32, width: float = 1.0):
        super().__init__(num_classes, in_channels, image_size, width, depth=16, widen=1)


class WRN40_1(WideResNet):
    arch_id = "wrn40_1"

    def __init__(self, num_classes: int, in_channels: int = 3, image_size: int = 32, width: float = 1.0):
        super().__init__(num_classes, in_channels, image_size, width, depth=40, widen=1)
