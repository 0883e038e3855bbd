"""Shape-preserving image-to-image network placed between processor and recognizer.

Layout follows the 6-block ResNet generator used for unpaired image
translation: 7x7 stem, two stride-2 downsamplings, residual blocks at
quarter resolution, two transposed-conv upsamplings and a 7x7 head.  The
head output is added to the input image.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from torch import nn

from ..errors import InvalidSpec


@dataclass(frozen=True)
class TransformerSpec:
    n_resblocks: int = 6
    base_channels: int = 16

    def __post_init__(self):
        if self.n_resblocks < 1 or self.base_channels < 1:
            raise InvalidSpec(f"invalid transformer spec {self}")

    def to_dict(self):
        return asdict(self)


class _Block(nn.Module):
    def __init__(self, c):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(c, c, 3),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(c, c, 3),
            nn.InstanceNorm2d(c),
        )

    def forward(self, x):
        return x + self.body(x)


class Transformer(nn.Module):
    # Two stride-2 stages; spatial dims must be multiples of 4 and >= 8 for reflection padding.
    min_size = 8
    size_multiple = 4

    def __init__(self, spec: TransformerSpec):
        super().__init__()
        self.spec = spec
        c = spec.base_channels
        layers = [nn.ReflectionPad2d(3), nn.Conv2d(3, c, 7), nn.InstanceNorm2d(c), nn.ReLU(inplace=True)]
        layers += [nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.InstanceNorm2d(2 * c), nn.ReLU(inplace=True)]
        layers += [nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1), nn.InstanceNorm2d(4 * c), nn.ReLU(inplace=True)]
        layers += [_Block(4 * c) for _ in range(spec.n_resblocks)]
        layers += [
            nn.ConvTranspose2d(4 * c, 2 * c, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * c, c, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(c),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(3),
            nn.Conv2d(c, 3, 7),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return x + self.net(x)

