"""Composed gradient checks: a tiny float64 ViT through the DINO and weighted-BCE losses."""
from __future__ import annotations

import copy

import numpy as np
import torch

from .model import ModelConfig, build, init_weights
from .numerics import GradReport, grad_check, run_primitive_suite
from .objectives import DinoState, dino_loss, weighted_bce

TINY = ModelConfig(image_size=8, patch_size=4, embed_dim=8, depth=2, heads=2, mlp_ratio=2.0,
                   projector_hidden=16, projector_out=8, prototypes=12, num_classes=3)


def _tiny_nets(seed: int):
    # std 0.02 at width 8 leaves ||z|| tiny before normalisation, so curvature swamps the stencil
    student = build(TINY, seed)
    init_weights(student, torch.Generator().manual_seed(seed), std=0.3)
    student = student.double()
    teacher = copy.deepcopy(student)
    g = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        for p in teacher.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=g, dtype=p.dtype))
            p.requires_grad_(False)
    return student, teacher


def composed_dino_check(seed: int = 0, tol: float = 1e-4, n_directions: int = 12) -> GradReport:
    """Student ViT + projector + prototypes + DINO loss, w.r.t. pixels and all student parameters."""
    student, teacher = _tiny_nets(seed)
    g = torch.Generator().manual_seed(seed + 2)
    x = torch.rand((4, 8, 8, 3), generator=g, dtype=torch.float64)
    state = DinoState(center=0.1 * torch.randn(TINY.prototypes, generator=g, dtype=torch.float64))
    with torch.no_grad():
        _, t = teacher(x)
    t_views = t.chunk(2)

    def op(images):
        _, s = student(images)
        return dino_loss(s.chunk(2), t_views, state)

    params = [p for p in student.parameters() if p.requires_grad]
    return grad_check(op, x, name="composed vit+dino", max_coords=24, n_directions=n_directions,
                      params=params, seed=seed, tol=tol)


def composed_bce_check(seed: int = 0, tol: float = 1e-4, n_directions: int = 12) -> GradReport:
    """Backbone + linear classifier + CIW-weighted BCE."""
    student, _ = _tiny_nets(seed)
    clf = build(TINY, seed + 3, "classifier")
    init_weights(clf, torch.Generator().manual_seed(seed + 3), std=0.3)
    clf = clf.double()
    g = torch.Generator().manual_seed(seed + 4)
    x = torch.rand((4, 8, 8, 3), generator=g, dtype=torch.float64)
    y = (torch.rand((4, TINY.num_classes), generator=g) < 0.5).double()
    pw = torch.tensor(np.linspace(2.5, 5.0, TINY.num_classes))

    def op(images):
        return weighted_bce(clf(student.backbone(images)), y, pw)

    params = [p for p in list(student.backbone.parameters()) + list(clf.parameters())]
    return grad_check(op, x, name="composed vit+weighted-bce", max_coords=24, n_directions=n_directions,
                      params=params, seed=seed, tol=tol)


def full_suite(seed: int = 0, tol: float = 1e-4, n_shapes: int = 10) -> list[GradReport]:
    reports = run_primitive_suite(n_shapes=n_shapes, tol=tol, seed=seed)
    reports.append(composed_dino_check(seed, tol))
    reports.append(composed_bce_check(seed, tol))
    return reports
