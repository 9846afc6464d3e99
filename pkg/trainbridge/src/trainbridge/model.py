"""Toy frozen-encoder segmentation model.

The encoder is a patch-embedding stack with a fixed patch stride: input
H x W maps to a floor(H/stride) x floor(W/stride) feature grid.  Each task
head ends in a 1x1 projection onto its class count; logits are upsampled
back to pixel resolution outside the head.
"""

from __future__ import annotations

import hashlib

import torch
from torch import nn

PATCH_STRIDE = 14
ENCODER_DIM = 32


class ToyEncoder(nn.Module):
    def __init__(self, dim: int = ENCODER_DIM, stride: int = PATCH_STRIDE):
        super().__init__()
        self.stride = stride
        self.patch = nn.Conv2d(3, dim, kernel_size=stride, stride=stride)
        self.act = nn.GELU()
        self.mix = nn.Conv2d(dim, dim, kernel_size=1)   # final feature block

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mix(self.act(self.patch(x)))


class DecoderHead(nn.Module):
    """Per-task decoder: hidden 1x1 conv then a 1x1 projection to classes."""

    def __init__(self, dim: int, n_classes: int, hidden: int = 64):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(dim, hidden, kernel_size=1),
            nn.ReLU(),
        )
        self.project = nn.Conv2d(hidden, n_classes, kernel_size=1)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return self.project(self.body(feats))


def make_encoder(seed: int = 0, dim: int = ENCODER_DIM,
                 stride: int = PATCH_STRIDE) -> ToyEncoder:
    torch.manual_seed(seed)
    return ToyEncoder(dim=dim, stride=stride)


def save_checkpoint(path, encoder: ToyEncoder, epoch: int) -> None:
    torch.save({"epoch": epoch, "model": encoder.state_dict()}, path)


def load_checkpoint(path, dim: int = ENCODER_DIM,
                    stride: int = PATCH_STRIDE) -> tuple[ToyEncoder, int]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
        encoder = ToyEncoder(dim=dim, stride=stride)
        encoder.load_state_dict(payload["model"])
    except Exception as exc:
        raise RuntimeError(f"cannot load checkpoint {path}: {exc}") from exc
    encoder.eval()
    return encoder, int(payload.get("epoch", 0))


def state_checksum(module: nn.Module) -> str:
    """sha256 over the module's parameter and buffer bytes, name-sorted."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        digest.update(name.encode("utf-8"))
        digest.update(state[name].detach().cpu().numpy().tobytes())
    return digest.hexdigest()
