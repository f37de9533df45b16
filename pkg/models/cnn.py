# models/cnn.py
from torch import nn

from models.base import ZooModel, scaled


def _bloque(entrada: int, salida: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(entrada, salida, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(salida),
        nn.ReLU(inplace=True),
        nn.MaxPool2d(2),
    )


class CNN1(ZooModel):
    """3 bloques conv-BN-ReLU-pool (32/64/128) + cabeza lineal."""

    arch_id = "cnn1"

    def __init__(self, num_classes: int, in_channels: int = 3, image_size: int = 32, width: float = 1.0):
        super().__init__(num_classes, in_channels, image_size, width)
        c1, c2, c3 = (scaled(c, width) for c in (32, 64, 128))
        self.features = nn.Sequential(
            _bloque(in_channels, c1),
            _bloque(c1, c2),
            _bloque(c2, c3),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(c3, num_classes)

    def forward(self, x):
        return self.head(self.features(x).flatten(1))


class CNN2(ZooModel):
    """2 bloques conv (16/32) + 2 capas lineales."""

    arch_id = "cnn2"

    def __init__(self, num_classes: int, in_channels: int = 3, image_size: int = 32, width: float = 1.0):
        super().__init__(num_classes, in_channels, image_size, width)
        c1, c2 = scaled(16, width), scaled(32, width)
        oculto = scaled(128, width)
        self.features = nn.Sequential(
            _bloque(in_channels, c1),
            _bloque(c1, c2),
            nn.AdaptiveAvgPool2d(4),
        )
        self.head = nn.Sequential(
            nn.Linear(c2 * 16, oculto),
            nn.ReLU(inplace=True),
            nn.Linear(oculto, num_classes),
        )

    def forward(self, x):
        return self.head(self.features(x).flatten(1))
