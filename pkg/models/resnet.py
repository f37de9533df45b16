# models/resnet.py
import torch.nn.functional as F
from torch import nn

from models.base import ZooModel, scaled


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, entrada: int, salida: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(entrada, salida, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(salida)
        self.conv2 = nn.Conv2d(salida, salida, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(salida)

        self.shortcut = nn.Sequential()
        if stride != 1 or entrada != salida:
            self.shortcut = nn.Sequential(
                nn.Conv2d(entrada, salida, 1, stride=stride, bias=False),
                nn.BatchNorm2d(salida),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ResNet18(ZooModel):
    """ResNet-18 con stem 3×3 (variante para imágenes pequeñas)."""

    arch_id = "resnet18"

    def __init__(self, num_classes: int, in_channels: int = 3, image_size: int = 32, width: float = 1.0):
        super().__init__(num_classes, in_channels, image_size, width)
        anchos = [scaled(c, width) for c in (64, 128, 256, 512)]

        self.conv1 = nn.Conv2d(in_channels, anchos[0], 3, stride=1, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(anchos[0])

        capas = []
        entrada = anchos[0]
        for i, salida in enumerate(anchos):
            stride = 1 if i == 0 else 2
            capas.append(nn.Sequential(BasicBlock(entrada, salida, stride), BasicBlock(salida, salida, 1)))
            entrada = salida
        self.layer1, self.layer2, self.layer3, self.layer4 = capas

        self.linear = nn.Linear(anchos[-1], num_classes)

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.layer4(self.layer3(self.layer2(self.layer1(out))))
        out = F.adaptive_avg_pool2d(out, 1).flatten(1)
        return self.linear(out)
