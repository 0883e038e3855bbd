"""SRResNet-style processing network."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InvalidSpec


@dataclass(frozen=True)
class ProcessorSpec:
    upscale: int = 4
    n_resblocks: int = 5
    base_channels: int = 32
    # Adds the (bicubic-upsampled) input to the output so the body learns a residual.
    image_skip: bool = True

    def __post_init__(self):
        if self.upscale not in (1, 4):
            raise InvalidSpec(f"upscale must be 1 or 4, got {self.upscale}")
        if self.n_resblocks < 1:
            raise InvalidSpec(f"n_resblocks must be >= 1, got {self.n_resblocks}")
        if self.base_channels < 1:
            raise InvalidSpec(f"base_channels must be >= 1, got {self.base_channels}")

    def to_dict(self):
        return asdict(self)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.PReLU(channels),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class Processor(nn.Module):
    min_size = 1

    def __init__(self, spec: ProcessorSpec):
        super().__init__()
        self.spec = spec
        c = spec.base_channels
        self.head = nn.Sequential(nn.Conv2d(3, c, 9, padding=4), nn.PReLU(c))
        self.blocks = nn.Sequential(*[ResidualBlock(c) for _ in range(spec.n_resblocks)])
        self.fuse = nn.Sequential(nn.Conv2d(c, c, 3, padding=1), nn.BatchNorm2d(c))
        up = []
        if spec.upscale == 4:
            for _ in range(2):
                up += [nn.Conv2d(c, 4 * c, 3, padding=1), nn.PixelShuffle(2), nn.PReLU(c)]
        self.upsample = nn.Sequential(*up)
        self.tail = nn.Conv2d(c, 3, 9, padding=4)
        if spec.image_skip:
            # Start as the identity / bicubic pathway; training learns the correction.
            nn.init.zeros_(self.tail.weight)
            nn.init.zeros_(self.tail.bias)

    def forward(self, x):
        feat = self.head(x)
        feat = feat + self.fuse(self.blocks(feat))
        out = self.tail(self.upsample(feat))
        if self.spec.image_skip:
            if self.spec.upscale > 1:
                base = F.interpolate(x, scale_factor=self.spec.upscale, mode="bicubic",
                                     align_corners=False)
            else:
                base = x
            out = out + base
        return out
