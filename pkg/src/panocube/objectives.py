"""Adversarial losses, masked gradient penalty, hole-restricted L1.

Sign conventions: the generator minimizes -E[D(fake)] for each critic;
each critic minimizes E[D(fake)] - E[D(real)] plus the weighted gradient
penalty. The penalty masks the critic's input gradient to the hole region
(weight 1 - m, so valid pixels contribute nothing) before taking the norm,
then pushes that norm toward 1 on straight-line interpolates between real
and generated samples.
"""

import math
from dataclasses import dataclass, fields

import torch

from .errors import ConfigurationError, NumericalError, ValidationError


@dataclass(frozen=True)
class ObjectiveWeights:
    """Scalar weights: adversarial term, gradient penalty, L1 term."""

    adversarial: float = 0.001
    gradient_penalty: float = 10.0
    l1: float = 1.2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"objective weight {f.name} must be >= 0")


def generator_adversarial_loss(scores):
    """-mean(critic scores on generated samples)."""
    if scores.numel() == 0:
        raise ValidationError("empty score batch")
    return -scores.mean()


def critic_loss(scores_real, scores_fake):
    """mean(fake) - mean(real); the critic minimizes this."""
    if scores_real.numel() == 0 or scores_real.shape != scores_fake.shape:
        raise ValidationError(
            f"score batches must match and be non-empty, got {tuple(scores_real.shape)} "
            f"vs {tuple(scores_fake.shape)}"
        )
    return scores_fake.mean() - scores_real.mean()


def _as_torch_generator(rng):
    if isinstance(rng, torch.Generator):
        return rng
    gen = torch.Generator()
    gen.manual_seed(int(rng))
    return gen


def masked_gradient_penalty(critic, x_real, x_fake, mask, rng):
    """mean over the batch of (|| grad D(x_hat) * (1-m) ||_2 - 1)^2.

    ``mask`` must broadcast against the inputs; ``rng`` is a torch.Generator
    or a seed and draws one interpolation coefficient per batch item.
    """
    if x_real.shape != x_fake.shape:
        raise ValidationError(
            f"real/fake shapes differ: {tuple(x_real.shape)} vs {tuple(x_fake.shape)}"
        )
    gen = _as_torch_generator(rng)
    n = x_real.shape[0]
    eps_shape = (n,) + (1,) * (x_real.dim() - 1)
    eps = torch.rand(eps_shape, generator=gen, dtype=x_real.dtype)
    x_hat = (eps * x_real + (1.0 - eps) * x_fake).detach().requires_grad_(True)
    scores = critic(x_hat)
    grad = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)[0]
    hole_grad = grad * (1.0 - mask)
    norms = hole_grad.flatten(1).norm(dim=1)
    penalty = ((norms - 1.0) ** 2).mean()
    if not torch.isfinite(penalty):
        raise NumericalError(
            "non-finite gradient penalty "
            f"(finite gradients: {bool(torch.isfinite(grad).all())}, "
            f"finite scores: {bool(torch.isfinite(scores).all())})"
        )
    return penalty


def masked_l1(generated, target, mask, reduction="mean"):
    """L1 over hole pixels: ||(1-m) * (generated - target)||_1.

    ``reduction="mean"`` divides by the total element count for scale
    stability across resolutions; ``"sum"`` is the literal norm.
    """
    if generated.shape != target.shape:
        raise ValidationError(
            f"shape mismatch: {tuple(generated.shape)} vs {tuple(target.shape)}"
        )
    if reduction not in ("mean", "sum"):
        raise ConfigurationError(f"unknown reduction {reduction!r}")
    total = ((1.0 - mask) * (generated - target)).abs().sum()
    if reduction == "sum":
        return total
    return total / generated.numel()


@dataclass
class LossTerms:
    """Raw loss components entering the weighted totals."""

    generator_adversarial: object
    l1: object
    critic_whole: object
    critic_slice: object
    gp_whole: object
    gp_slice: object


def _check_finite(name, value):
    finite = (
        torch.isfinite(value).all() if isinstance(value, torch.Tensor) else math.isfinite(value)
    )
    if not finite:
        raise NumericalError(f"training diverged: loss term {name!r} is non-finite")


def total_objective(terms, weights):
    """Combine components into (generator_loss, {"whole": ..., "slice": ...})."""
    for f in fields(LossTerms):
        _check_finite(f.name, getattr(terms, f.name))
    generator_loss = (
        weights.adversarial * terms.generator_adversarial + weights.l1 * terms.l1
    )
    critic_losses = {
        "whole": terms.critic_whole + weights.gradient_penalty * terms.gp_whole,
        "slice": terms.critic_slice + weights.gradient_penalty * terms.gp_slice,
    }
    return generator_loss, critic_losses
