"""Differentiable primitives and a finite-difference gradient checker.

Reverse-mode differentiation is delegated to torch autograd; every op the
model and the losses need is exposed here so that ``grad_check`` can cover
it directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

L2_EPS = 1e-6
_SQRT_HALF = math.sqrt(0.5)


def softmax(v: torch.Tensor, temperature: float = 1.0, dim: int = -1) -> torch.Tensor:
    """Temperature softmax along ``dim``, shifted by the max before exponentiation."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not torch.isfinite(v).all():
        raise ValueError("softmax input contains non-finite values")
    z = v / temperature
    z = z - z.amax(dim=dim, keepdim=True).detach()
    e = torch.exp(z)
    return e / e.sum(dim=dim, keepdim=True)


def log_softmax(v: torch.Tensor, temperature: float = 1.0, dim: int = -1) -> torch.Tensor:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not torch.isfinite(v).all():
        raise ValueError("log_softmax input contains non-finite values")
    z = v / temperature
    z = z - z.amax(dim=dim, keepdim=True).detach()
    return z - torch.log(torch.exp(z).sum(dim=dim, keepdim=True))


def gelu(x: torch.Tensor) -> torch.Tensor:
    # exact (erf) form, as in stock ViTs; ~5x cheaper than the tanh form on CPU
    return F.gelu(x)


def gelu_reference(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.erf(x * _SQRT_HALF))


def layer_norm(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    return F.layer_norm(x, (x.shape[-1],), weight, bias, eps)


def linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    return F.linear(x, weight, bias)


def l2_normalize(x: torch.Tensor, dim: int = -1, eps: float = L2_EPS) -> torch.Tensor:
    """Scale to unit L2 norm; the ``eps`` floor keeps zero vectors finite."""
    return x / x.norm(dim=dim, keepdim=True).clamp_min(eps)


def weight_normalize(v: torch.Tensor, eps: float = L2_EPS) -> torch.Tensor:
    """Row-wise unit-norm weights (weight norm with the magnitude fixed at 1)."""
    return l2_normalize(v, dim=1, eps=eps)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Scaled dot-product attention over (..., tokens, head_dim)."""
    return F.scaled_dot_product_attention(q, k, v)


def attention_reference(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    a = softmax(q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1]))
    return a @ v


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradReport:
    name: str
    max_rel_error: float
    tolerance: float
    n_checked: int
    flagged: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" flagged={len(self.flagged)}" if self.flagged else ""
        return f"{status} {self.name:<28} max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:g} n={self.n_checked}{extra}"


def rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


class _Projection:
    """Reduce a tensor-valued op to a scalar with a fixed random weighting.

    Finite differences are taken on the output tensors before weighting, so
    rounding scales with each output element rather than with the total.
    """

    def __init__(self, op: Callable[..., torch.Tensor], seed: int):
        self.op = op
        self.seed = seed
        self.weights: dict[tuple, torch.Tensor] = {}

    def weight(self, out: torch.Tensor) -> torch.Tensor:
        key = tuple(out.shape)
        if key not in self.weights:
            if out.dim() == 0:
                self.weights[key] = torch.ones((), dtype=out.dtype)
            else:
                g = torch.Generator().manual_seed(self.seed)
                self.weights[key] = torch.randn(out.shape, generator=g, dtype=out.dtype)
        return self.weights[key]

    def scalar(self, *args) -> torch.Tensor:
        out = self.op(*args)
        return (out * self.weight(out)).sum()

    def slope(self, plus: torch.Tensor, minus: torch.Tensor, h: float) -> float:
        return float(((plus - minus) * self.weight(plus)).sum()) / h


def grad_check(
    op: Callable[..., torch.Tensor],
    inputs: torch.Tensor | tuple[torch.Tensor, ...],
    eps: float = 1e-5,
    tol: float = 1e-4,
    name: str = "op",
    max_coords: int = 64,
    n_directions: int = 0,
    params: list[torch.Tensor] | None = None,
    seed: int = 0,
) -> GradReport:
    """Compare autograd gradients of ``op`` against central differences in float64.

    The numeric slope uses the fourth-order central stencil at ``eps`` and
    ``2*eps``.  Inputs are checked coordinate-wise (a random subset of at most
    ``max_coords`` per input).  ``params`` (module parameters, already float64)
    are checked with ``n_directions`` random directional derivatives.
    Coordinates whose one-sided slopes disagree are treated as
    non-differentiable points: flagged and left out of the max.
    """
    if isinstance(inputs, torch.Tensor):
        inputs = (inputs,)
    inputs = tuple(x.detach().to(torch.float64).clone().requires_grad_(True) for x in inputs)
    params = list(params or [])
    proj = _Projection(op, seed)
    rng = np.random.default_rng(seed)

    wrt = list(inputs) + params
    grads = torch.autograd.grad(proj.scalar(*inputs), wrt, allow_unused=True)
    grads = [torch.zeros_like(w) if g is None else g for w, g in zip(wrt, grads)]

    errs: list[float] = []
    flagged: list[str] = []

    def slopes(shift: Callable[[float], None]) -> tuple[float, float, float]:
        outs = {}
        for k in (-2, -1, 0, 1, 2):
            shift(k * eps)
            outs[k] = op(*inputs).clone()
        shift(0.0)
        d1 = proj.slope(outs[1], outs[-1], 2 * eps)
        d2 = proj.slope(outs[2], outs[-2], 4 * eps)
        numeric = (4 * d1 - d2) / 3
        return numeric, proj.slope(outs[1], outs[0], eps), proj.slope(outs[0], outs[-1], eps)

    with torch.no_grad():
        for i, (x, g) in enumerate(zip(inputs, grads)):
            flat = x.view(-1)
            n = flat.numel()
            idx = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
            for j in idx:
                j = int(j)
                orig = flat[j].item()

                def shift(h, j=j, orig=orig, flat=flat):
                    flat[j] = orig + h

                numeric, fwd, bwd = slopes(shift)
                if abs(fwd - bwd) > 1e-2 * max(abs(fwd), abs(bwd), 1.0):
                    flagged.append(f"input{i}[{j}]")
                    continue
                errs.append(rel_error(g.reshape(-1)[j].item(), numeric))

        if params and n_directions:
            pgrads = grads[len(inputs):]
            saved = [p.detach().clone() for p in params]
            gen = torch.Generator().manual_seed(seed + 1)
            for _ in range(n_directions):
                dirs = [torch.randn(p.shape, generator=gen, dtype=p.dtype) for p in params]
                analytic = sum(float((g * u).sum()) for g, u in zip(pgrads, dirs))

                def shift(h, dirs=dirs):
                    for p, p0, u in zip(params, saved, dirs):
                        p.copy_(p0 + h * u)

                numeric, _, _ = slopes(shift)
                errs.append(rel_error(analytic, numeric))

    return GradReport(name, max(errs) if errs else 0.0, tol, len(errs), flagged)


# ---------------------------------------------------------------------------
# the primitive suite run by `dino-forge gradcheck`


def _random_shape(rng: np.random.Generator, ndim: int, lo: int = 1, hi: int = 6) -> tuple[int, ...]:
    return tuple(int(s) for s in rng.integers(lo, hi + 1, size=ndim))


def _rand(rng: np.random.Generator, shape) -> torch.Tensor:
    return torch.from_numpy(rng.standard_normal(shape))


def primitive_cases(n_shapes: int = 10, seed: int = 0):
    """Yield ``(name, op, inputs)`` for every primitive over random shapes."""
    rng = np.random.default_rng(seed)
    for k in range(n_shapes):
        m, n, p = _random_shape(rng, 3)
        yield "matmul", torch.matmul, (_rand(rng, (m, n)), _rand(rng, (n, p)))
        s = _random_shape(rng, 2)
        yield "add", torch.add, (_rand(rng, s), _rand(rng, s))
        yield "mul", torch.mul, (_rand(rng, s), _rand(rng, s))
        c = float(rng.uniform(-3, 3))
        yield "scale", (lambda x, c=c: c * x), (_rand(rng, s),)
        # beyond |x|~5, 1 + erf(x/sqrt2) cancels toward 0 and the forward
        # values carry too little precision for a 1e-4 finite-difference check
        yield "gelu", gelu, (_rand(rng, s).clamp(-4, 4),)
        d = int(rng.integers(4, 10))
        s2 = _random_shape(rng, 1) + (d,)
        yield "layer_norm", layer_norm, (_rand(rng, s2), _rand(rng, (d,)), _rand(rng, (d,)))
        t = float(rng.uniform(0.1, 2.0))
        # logits span at most 10 temperature units: far smaller probabilities
        # have gradients below the 1e-8 relative-error floor, where float64
        # rounding of the O(1) entries dominates the finite difference
        logits = torch.from_numpy(rng.uniform(-5 * t, 5 * t, s2))
        yield "softmax", (lambda x, t=t: softmax(x, t)), (logits,)
        yield "log_softmax", (lambda x, t=t: log_softmax(x, t)), (_rand(rng, s2),)
        yield "log", torch.log, (torch.from_numpy(rng.uniform(0.5, 3.0, s)),)
        yield "exp", torch.exp, (_rand(rng, s),)
        yield "sum", (lambda x: x.sum(dim=-1)), (_rand(rng, s),)
        yield "mean", (lambda x: x.mean(dim=0)), (_rand(rng, s),)
        s3 = _random_shape(rng, 2)
        yield "concat", (lambda a, b: torch.cat([a, b], dim=0)), (_rand(rng, s), _rand(rng, (s3[0], s[1])))
        w = s[-1]
        a = int(rng.integers(0, w))
        b = int(rng.integers(a + 1, w + 1))
        yield "slice", (lambda x, a=a, b=b: x[..., a:b]), (_rand(rng, s),)
        yield "l2_normalize", l2_normalize, (_rand(rng, s2),)
        yield "weight_normalize", weight_normalize, (_rand(rng, s2),)
        h, tk, hd = _random_shape(rng, 3, 1, 4)
        yield "attention", attention, tuple(_rand(rng, (h, tk, hd)) for _ in range(3))


def run_primitive_suite(n_shapes: int = 10, tol: float = 1e-4, seed: int = 0) -> list[GradReport]:
    """Grad-check every primitive; one aggregated report per primitive name."""
    worst: dict[str, GradReport] = {}
    for name, op, inputs in primitive_cases(n_shapes, seed):
        rep = grad_check(op, inputs, tol=tol, name=name, seed=seed)
        prev = worst.get(name)
        if prev is None:
            worst[name] = rep
        else:
            prev.max_rel_error = max(prev.max_rel_error, rep.max_rel_error)
            prev.n_checked += rep.n_checked
            prev.flagged.extend(rep.flagged)
    return list(worst.values())
