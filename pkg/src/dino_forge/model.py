"""ViT backbone, DINO projection head with weight-normalised prototypes, linear classifier."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import torch
from torch import nn

from . import numerics as nx


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    patch_size: int = 4
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    projector_hidden: int = 2048
    projector_out: int = 256
    prototypes: int = 256
    num_classes: int = 17

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        for name in ("image_size", "patch_size", "embed_dim", "depth", "heads", "projector_hidden",
                     "projector_out", "prototypes", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


PRESETS = {
    "vit-t/16": ModelConfig(224, 16, 192, 12, 3, prototypes=32768),
    "vit-s/16": ModelConfig(224, 16, 384, 12, 6, prototypes=32768),
    "vit-mu": ModelConfig(32, 4, 64, 4, 4, projector_hidden=256, projector_out=256, prototypes=256),
}


def preset(name: str, **overrides) -> ModelConfig:
    try:
        cfg = PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None
    return cfg.replace(**overrides) if overrides else cfg


def patchify(images: torch.Tensor, patch_size: int) -> torch.Tensor:
    """(B, H, W, 3) or (H, W, 3) -> (B, N, p*p*3) with patches in row-major order."""
    single = images.dim() == 3
    if single:
        images = images.unsqueeze(0)
    b, h, w, c = images.shape
    p = patch_size
    if h % p or w % p:
        raise ValueError(f"image {h}x{w} not divisible by patch size {p}")
    x = images.reshape(b, h // p, p, w // p, p, c).permute(0, 1, 3, 2, 4, 5)
    x = x.reshape(b, (h // p) * (w // p), p * p * c)
    return x[0] if single else x


class LayerNorm(nn.Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return nx.layer_norm(x, self.weight, self.bias, self.eps)


class Block(nn.Module):
    """Pre-norm transformer block: x + attn(norm(x)), then x + mlp(norm(x))."""

    def __init__(self, dim: int, heads: int, mlp_hidden: int):
        super().__init__()
        self.heads = heads
        self.norm1 = LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = LayerNorm(dim)
        self.fc1 = nn.Linear(dim, mlp_hidden)
        self.fc2 = nn.Linear(mlp_hidden, dim)

    def forward(self, x):
        b, n, d = x.shape
        qkv = self.qkv(self.norm1(x)).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        a = nx.attention(qkv[0], qkv[1], qkv[2])
        x = x + self.proj(a.transpose(1, 2).reshape(b, n, d))
        return x + self.fc2(nx.gelu(self.fc1(self.norm2(x))))


class VisionTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.patch_embed = nn.Linear(cfg.patch_size * cfg.patch_size * 3, d)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.num_patches + 1, d))
        self.blocks = nn.ModuleList(Block(d, cfg.heads, cfg.mlp_hidden) for _ in range(cfg.depth))
        self.norm = LayerNorm(d)

    def tokens(self, images: torch.Tensor) -> torch.Tensor:
        """All normalised output tokens, class token first."""
        s = self.cfg.image_size
        if images.dim() != 4 or tuple(images.shape[1:]) != (s, s, 3):
            raise ValueError(f"expected images of shape (B, {s}, {s}, 3), got {tuple(images.shape)}")
        x = self.patch_embed(patchify(images, self.cfg.patch_size))
        x = torch.cat([self.cls_token.expand(x.shape[0], -1, -1), x], dim=1) + self.pos_embed
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.tokens(images)[:, 0]


class DinoHead(nn.Module):
    """MLP projector, L2 normalisation, then unit-norm prototype logits."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc1 = nn.Linear(cfg.embed_dim, cfg.projector_hidden)
        self.fc2 = nn.Linear(cfg.projector_hidden, cfg.projector_hidden)
        self.fc3 = nn.Linear(cfg.projector_hidden, cfg.projector_out)
        self.prototypes = nn.Parameter(torch.zeros(cfg.prototypes, cfg.projector_out))

    def project(self, r: torch.Tensor) -> torch.Tensor:
        z = self.fc3(nx.gelu(self.fc2(nx.gelu(self.fc1(r)))))
        return nx.l2_normalize(z)

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        return nx.linear(self.project(r), nx.weight_normalize(self.prototypes))


class DinoNet(nn.Module):
    """Backbone plus projection head; used for both student and teacher."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.backbone = VisionTransformer(cfg)
        self.head = DinoHead(cfg)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        r = self.backbone(images)
        return r, self.head(r)


class Classifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc = nn.Linear(cfg.embed_dim, cfg.num_classes)

    def forward(self, r: torch.Tensor) -> torch.Tensor:
        return self.fc(r)


@torch.no_grad()
def init_weights(module: nn.Module, generator: torch.Generator, std: float = 0.02) -> None:
    """Truncated-normal weights, zero biases, unit LayerNorm gains; order follows named_parameters.

    The patch embedding keeps the default convolution init, U(+-1/sqrt(fan_in)) for
    weight and bias, as a strided conv would in a stock ViT.
    """
    for name, p in module.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        owner_name = name.rsplit(".", 1)[0] if "." in name else ""
        owner = module.get_submodule(owner_name) if owner_name else module
        if owner_name.endswith("patch_embed"):
            bound = 1.0 / owner.in_features ** 0.5
            p.uniform_(-bound, bound, generator=generator)
        elif isinstance(owner, LayerNorm):
            p.fill_(1.0 if leaf == "weight" else 0.0)
        elif leaf == "bias":
            p.zero_()
        else:
            nn.init.trunc_normal_(p, std=std, a=-2 * std, b=2 * std, generator=generator)


def build(cfg: ModelConfig, seed: int, kind: str = "dino") -> nn.Module:
    """Construct and initialise a ``DinoNet`` (kind='dino'), backbone or classifier."""
    gen = torch.Generator().manual_seed(seed)
    net = {"dino": DinoNet, "backbone": VisionTransformer, "classifier": Classifier}[kind](cfg)
    init_weights(net, gen)
    return net


def _linear(n_in: int, n_out: int, bias: bool = True) -> int:
    return n_in * n_out + (n_out if bias else 0)


def count_params(cfg: ModelConfig, include_heads: bool = False) -> int:
    """Closed-form parameter count; heads = projector, prototypes and classifier."""
    d, h = cfg.embed_dim, cfg.mlp_hidden
    block = 2 * (2 * d) + _linear(d, 3 * d) + _linear(d, d) + _linear(d, h) + _linear(h, d)
    n = _linear(cfg.patch_size ** 2 * 3, d) + d + (cfg.num_patches + 1) * d + cfg.depth * block + 2 * d
    if include_heads:
        ph = cfg.projector_hidden
        n += _linear(d, ph) + _linear(ph, ph) + _linear(ph, cfg.projector_out)
        n += cfg.prototypes * cfg.projector_out
        n += _linear(d, cfg.num_classes)
    return n
