"""Minimal frozen ViT backbones.

Only what feature export needs: patch embedding, CLS token, learned
position embeddings, pre-LN transformer blocks, and a final norm. The
registry pins each backbone's geometry and its published normalization
constants. Without a weights file the model gets deterministic seeded
random weights; that keeps the whole pipeline testable end to end where
pretrained checkpoints are unavailable, and real extractions pass
``weights=`` with an exported state dict.
"""

from dataclasses import dataclass

import torch
from torch import nn

from .errors import SpecError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    patch_size: int
    dim: int
    depth: int
    heads: int
    resolution: int  # square input edge, pixels
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    @property
    def tokens_per_frame(self) -> int:
        return (self.resolution // self.patch_size) ** 2


BACKBONES = {
    # DINOv2-style geometry: patch 14 at 224px -> 16x16 = 256 patch tokens.
    "dinov2-vitb14": BackboneSpec("dinov2-vitb14", 14, 768, 12, 12, 224,
                                  IMAGENET_MEAN, IMAGENET_STD),
    # CLIP-style geometry: patch 16 at 224px -> 14x14 = 196 patch tokens.
    "clip-vitb16": BackboneSpec("clip-vitb16", 16, 768, 12, 12, 224,
                                CLIP_MEAN, CLIP_STD),
    # Small geometry for smoke tests and pipeline debugging.
    "tiny-vit16": BackboneSpec("tiny-vit16", 16, 32, 2, 4, 64,
                               IMAGENET_MEAN, IMAGENET_STD),
}


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(),
                                 nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn, _ = self.attn(h, h, h, need_weights=False)
        x = x + attn
        return x + self.mlp(self.norm2(x))


class VisionTransformer(nn.Module):
    """Returns per-frame ``([B, n, d]`` patch tokens, ``[B, d]`` CLS)."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        n = spec.tokens_per_frame
        self.patch_embed = nn.Conv2d(3, spec.dim, kernel_size=spec.patch_size,
                                     stride=spec.patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, spec.dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, n + 1, spec.dim))
        self.blocks = nn.ModuleList(
            Block(spec.dim, spec.heads) for _ in range(spec.depth))
        self.norm = nn.LayerNorm(spec.dim)

    def _pos_embed_for(self, grid: int) -> torch.Tensor:
        """Position embeddings for a ``grid x grid`` patch layout.

        The native grid returns the parameter untouched (bit-exact path);
        other resolutions get the usual bicubic interpolation of the patch
        embeddings, with the CLS slot carried over as is.
        """
        native = self.spec.resolution // self.spec.patch_size
        if grid == native:
            return self.pos_embed
        cls_pe = self.pos_embed[:, :1]
        patch_pe = self.pos_embed[:, 1:]
        patch_pe = patch_pe.reshape(1, native, native, -1).permute(0, 3, 1, 2)
        patch_pe = nn.functional.interpolate(
            patch_pe, size=(grid, grid), mode="bicubic", align_corners=False)
        patch_pe = patch_pe.permute(0, 2, 3, 1).reshape(1, grid * grid, -1)
        return torch.cat([cls_pe, patch_pe], dim=1)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if images.ndim != 4 or images.shape[1] != 3:
            raise SpecError(f"expected [B, 3, H, W] images, got {tuple(images.shape)}")
        side = images.shape[2]
        if images.shape[3] != side or side % self.spec.patch_size != 0:
            raise SpecError(
                f"{self.spec.name} wants square input sized in multiples of "
                f"{self.spec.patch_size}px, got {images.shape[2]}x{images.shape[3]}")
        x = self.patch_embed(images).flatten(2).transpose(1, 2)  # [B, n, d]
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self._pos_embed_for(side // self.spec.patch_size)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        return x[:, 1:, :], x[:, 0, :]


def build_backbone(name: str, weights=None, seed: int = 0) -> VisionTransformer:
    """Construct a frozen eval-mode backbone.

    ``weights`` is a path to a state dict saved with torch.save; loading is
    strict, so a dim mismatch against the named geometry aborts instead of
    silently extracting garbage. With no weights the parameters come from a
    seeded RNG and are reproducible across processes.
    """
    if name not in BACKBONES:
        raise SpecError(
            f"unknown backbone {name!r}; available: {', '.join(sorted(BACKBONES))}")
    spec = BACKBONES[name]
    torch.manual_seed(seed)
    model = VisionTransformer(spec)
    with torch.no_grad():
        model.cls_token.normal_(0.0, 0.02)
        model.pos_embed.normal_(0.0, 0.02)
    if weights is not None:
        state = torch.load(weights, map_location="cpu", weights_only=True)
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise SpecError(f"weights do not match {name!r} geometry: {exc}") from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
