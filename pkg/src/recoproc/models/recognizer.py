"""Small CIFAR-style classifiers in three families (ResNet, VGG, DenseNet)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Tuple

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InvalidSpec

FAMILIES = ("resnet_small", "vgg_small", "densenet_small")
DEFAULT_DEPTH = {"resnet_small": 8, "vgg_small": 6, "densenet_small": 10}


@dataclass(frozen=True)
class RecognizerSpec:
    family: str = "resnet_small"
    depth: int = 8
    num_classes: int = 10
    width: int = 16
    mean: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: Tuple[float, float, float] = (0.25, 0.25, 0.25)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown recognizer family {self.family!r}; expected one of {FAMILIES}")
        if self.num_classes < 2:
            raise InvalidSpec(f"num_classes must be >= 2, got {self.num_classes}")
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "std", tuple(float(s) for s in self.std))
        if len(self.mean) != 3 or len(self.std) != 3 or min(self.std) <= 0:
            raise InvalidSpec("mean/std must be three values with positive std")
        if self.family == "resnet_small" and (self.depth - 2) % 6:
            raise InvalidSpec(f"resnet_small depth must be 6n+2, got {self.depth}")
        if self.family == "vgg_small" and (self.depth % 3 or self.depth < 3):
            raise InvalidSpec(f"vgg_small depth must be a positive multiple of 3, got {self.depth}")
        if self.family == "densenet_small" and ((self.depth - 4) % 3 or self.depth < 7):
            raise InvalidSpec(f"densenet_small depth must be 3n+4 with n >= 1, got {self.depth}")

    def to_dict(self):
        d = asdict(self)
        d["mean"] = list(self.mean)
        d["std"] = list(self.std)
        return d


class _BasicBlock(nn.Module):
    def __init__(self, cin, cout, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = nn.Sequential()
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(nn.Conv2d(cin, cout, 1, stride=stride, bias=False),
                                          nn.BatchNorm2d(cout))

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


def _resnet(spec):
    n = (spec.depth - 2) // 6
    w = spec.width
    layers = [nn.Conv2d(3, w, 3, padding=1, bias=False), nn.BatchNorm2d(w), nn.ReLU(inplace=True)]
    cin = w
    for stage, cout in enumerate((w, 2 * w, 4 * w)):
        for i in range(n):
            layers.append(_BasicBlock(cin, cout, 2 if (stage > 0 and i == 0) else 1))
            cin = cout
    layers += [nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(cin, spec.num_classes)]
    return nn.Sequential(*layers)


def _vgg(spec):
    per_stage = spec.depth // 3
    w = spec.width
    layers = []
    cin = 3
    for cout in (w, 2 * w, 4 * w):
        for _ in range(per_stage):
            layers += [nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout), nn.ReLU(inplace=True)]
            cin = cout
        layers.append(nn.MaxPool2d(2))
    layers += [nn.AdaptiveAvgPool2d(2), nn.Flatten(), nn.Linear(cin * 4, 8 * w),
               nn.ReLU(inplace=True), nn.Linear(8 * w, spec.num_classes)]
    return nn.Sequential(*layers)


class _DenseLayer(nn.Module):
    def __init__(self, cin, growth):
        super().__init__()
        self.bn = nn.BatchNorm2d(cin)
        self.conv = nn.Conv2d(cin, growth, 3, padding=1, bias=False)

    def forward(self, x):
        return torch.cat([x, self.conv(F.relu(self.bn(x)))], dim=1)


def _densenet(spec):
    n = (spec.depth - 4) // 3
    growth = max(spec.width // 2, 4)
    c = 2 * growth
    layers = [nn.Conv2d(3, c, 3, padding=1, bias=False)]
    for block in range(3):
        for _ in range(n):
            layers.append(_DenseLayer(c, growth))
            c += growth
        if block < 2:
            cout = c // 2
            layers += [nn.BatchNorm2d(c), nn.ReLU(inplace=True), nn.Conv2d(c, cout, 1, bias=False),
                       nn.AvgPool2d(2)]
            c = cout
    layers += [nn.BatchNorm2d(c), nn.ReLU(inplace=True), nn.AdaptiveAvgPool2d(1), nn.Flatten(),
               nn.Linear(c, spec.num_classes)]
    return nn.Sequential(*layers)


_BUILDERS = {"resnet_small": _resnet, "vgg_small": _vgg, "densenet_small": _densenet}


class Recognizer(nn.Module):
    """Classifier that normalises its own ``[0, 1]`` input with fixed constants."""

    def __init__(self, spec: RecognizerSpec):
        super().__init__()
        self.spec = spec
        self.register_buffer("mean", torch.tensor(spec.mean).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(spec.std).view(1, 3, 1, 1))
        self.net = _BUILDERS[spec.family](spec)

    def forward(self, x):
        return self.net((x - self.mean) / self.std)
