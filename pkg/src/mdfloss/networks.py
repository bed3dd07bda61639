"""Per-scale generator and patch discriminator."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

LEAKY_SLOPE = 0.2


def receptive_field(depth: int, kernel: int) -> int:
    """Receptive field of ``depth`` stride-1 convolutions of size ``kernel``."""
    return 1 + depth * (kernel - 1)


def _init_(module: nn.Module, generator: torch.Generator | None) -> None:
    # He-normal for the leaky rectifier; without normalization layers a small
    # fixed std (0.02) shrinks activations ~3x per layer and the critic
    # starts out nearly blind
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, a=LEAKY_SLOPE, nonlinearity="leaky_relu", generator=generator)
            nn.init.zeros_(m.bias)


class PatchDiscriminator(nn.Module):
    """Fully convolutional critic; each output judges one input patch.

    With ``depth`` valid 3x3 convolutions the receptive field is
    ``1 + depth * 2`` (11 for the default depth of 5). :meth:`critic`
    returns the raw logits used by the adversarial objectives;
    :meth:`forward` squashes them to [0, 1].

    Feature taps are the ``depth - 1`` leaky-rectified hidden activations
    followed by the squashed terminal map, so ``layers == depth``.
    """

    def __init__(self, in_channels: int, width: int, depth: int = 5, kernel: int = 3,
                 strict: bool = True, generator: torch.Generator | None = None):
        super().__init__()
        if depth < 2:
            raise ValueError("discriminator depth must be at least 2")
        rf = receptive_field(depth, kernel)
        if strict and rf != 11:
            raise ValueError(f"depth={depth}, kernel={kernel} gives a {rf}x{rf} receptive field, expected 11x11")
        chans = [in_channels] + [width] * (depth - 1) + [1]
        self.convs = nn.ModuleList(nn.Conv2d(chans[i], chans[i + 1], kernel) for i in range(depth))
        self.in_channels = in_channels
        self.width = width
        self.depth = depth
        self.kernel = kernel
        _init_(self, generator)

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.depth, self.kernel)

    @property
    def layers(self) -> int:
        return self.depth

    def critic(self, x: torch.Tensor) -> torch.Tensor:
        h = x
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        return self.convs[-1](h)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.critic(x))

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        taps = []
        h = x
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
            taps.append(h)
        taps.append(torch.sigmoid(self.convs[-1](h)))
        return taps


class ResidualGenerator(nn.Module):
    """Same-padded conv stack whose output is added to its input."""

    def __init__(self, channels: int, width: int, depth: int = 5, kernel: int = 3,
                 generator: torch.Generator | None = None):
        super().__init__()
        chans = [channels] + [width] * (depth - 1) + [channels]
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], kernel, padding=kernel // 2) for i in range(depth)
        )
        _init_(self, generator)

    @property
    def radius(self) -> int:
        """Pixels of context each output depends on, per side."""
        return sum(c.kernel_size[0] // 2 for c in self.convs)

    def residual(self, x: torch.Tensor) -> torch.Tensor:
        h = x
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        return torch.tanh(self.convs[-1](h))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.residual(x)
