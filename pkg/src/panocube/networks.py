"""U-net generator and the two Wasserstein critics.

The generator is an encoder-decoder with skip concatenations. Every stage
is kernel 4, stride 2, padding 1. Encoder widths follow
64, 128, 256, 512, 512, ... (LeakyReLU 0.2, batch norm except the first
stage); decoder stages mirror them (ReLU, batch norm, dropout 0.5 on the
first two stages), and the final deconvolution maps to RGB through tanh
rescaled to [0, 1]. At face size 256 this is exactly the published
7-down/7-up layout; the depth shrinks as log2(S) for smaller faces so the
bottleneck stays at one spatial unit.

The whole critic scores all six faces at once as a 24-channel stack
(6 faces x RGB+mask, face-major); the slice critic shares one trunk across
faces and averages the six scalars. Both are unbounded linear-output
critics (no sigmoid).

Networks consume RGB in [-1, 1] plus a {0,1} mask channel; the stacking
helpers below perform that normalization from module-boundary [0, 1] data.
"""

import os
from dataclasses import asdict, dataclass

import torch
from torch import nn

from .errors import CheckpointError, ConfigurationError, ValidationError
from .projection import PROJECTION_CONVENTION

CHECKPOINT_VERSION = 1
MIN_FACE_SIZE = 16
_MAX_DEPTH = 7


def _check_face_size(s):
    if s < MIN_FACE_SIZE:
        raise ConfigurationError(f"face_size must be >= {MIN_FACE_SIZE}, got {s}")
    if s & (s - 1):
        raise ConfigurationError(f"face_size must be a power of two, got {s}")


def unet_depth(face_size):
    """Number of encoder stages: 7 when the face allows it, else log2(S)."""
    return min(_MAX_DEPTH, face_size.bit_length() - 1)


@dataclass(frozen=True)
class GeneratorConfig:
    face_size: int = 256
    in_channels: int = 4
    base_width: int = 64
    out_channels: int = 3
    dropout_p: float = 0.5


@dataclass(frozen=True)
class CriticConfig:
    face_size: int = 256
    in_channels: int = 24
    base_width: int = 64


class Generator(nn.Module):
    def __init__(self, config=None, **kwargs):
        super().__init__()
        self.config = config or GeneratorConfig(**kwargs)
        cfg = self.config
        _check_face_size(cfg.face_size)
        depth = unet_depth(cfg.face_size)
        widths = [min(cfg.base_width * 2**i, 512) for i in range(depth)]
        self.encoder = nn.ModuleList()
        for i in range(depth):
            c_in = cfg.in_channels if i == 0 else widths[i - 1]
            layers = [nn.Conv2d(c_in, widths[i], 4, 2, 1)]
            if i > 0:
                layers.append(nn.BatchNorm2d(widths[i]))
            layers.append(nn.LeakyReLU(0.2))
            self.encoder.append(nn.Sequential(*layers))
        self.decoder = nn.ModuleList()
        for j in range(depth):
            c_in = widths[-1] if j == 0 else widths[depth - 1 - j] * 2
            last = j == depth - 1
            c_out = cfg.out_channels if last else widths[depth - 2 - j]
            layers = [nn.ConvTranspose2d(c_in, c_out, 4, 2, 1)]
            if not last:
                layers.append(nn.BatchNorm2d(c_out))
                layers.append(nn.ReLU())
                if j < 2:
                    layers.append(nn.Dropout(cfg.dropout_p))
            self.decoder.append(nn.Sequential(*layers))

    def forward(self, damaged, mask):
        """(N, 3, S, S) damaged faces in [0,1] + (N, 1, S, S) masks ->
        (N, 3, S, S) generated faces in [0,1]."""
        cfg = self.config
        s = cfg.face_size
        if damaged.dim() != 4 or damaged.shape[1] != cfg.out_channels:
            raise ValidationError(f"expected (N,{cfg.out_channels},S,S) faces, got {tuple(damaged.shape)}")
        if mask.dim() != 4 or mask.shape[1] != cfg.in_channels - cfg.out_channels:
            raise ValidationError(f"expected (N,1,S,S) masks, got {tuple(mask.shape)}")
        if damaged.shape[2:] != (s, s) or mask.shape[2:] != (s, s):
            raise ValidationError(f"faces must be {s}x{s} for this generator")
        h = torch.cat([damaged * 2.0 - 1.0, mask], dim=1)
        skips = []
        for block in self.encoder:
            h = block(h)
            skips.append(h)
        for j, block in enumerate(self.decoder):
            if j > 0:
                h = torch.cat([h, skips[len(skips) - 1 - j]], dim=1)
            h = block(h)
        return (torch.tanh(h) + 1.0) / 2.0


class _CriticTrunk(nn.Module):
    """Four conv stages then one affine map to a scalar per item."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        cfg = config
        _check_face_size(cfg.face_size)
        if cfg.face_size % 16:
            raise ConfigurationError("critic face_size must be divisible by 16")
        widths = [cfg.base_width * 2**i for i in range(4)]
        self.blocks = nn.ModuleList()
        for i in range(4):
            c_in = cfg.in_channels if i == 0 else widths[i - 1]
            layers = [nn.Conv2d(c_in, widths[i], 4, 2, 1)]
            if i > 0:
                layers.append(nn.BatchNorm2d(widths[i]))
            layers.append(nn.LeakyReLU(0.2))
            self.blocks.append(nn.Sequential(*layers))
        self.flatten_features = widths[-1] * (cfg.face_size // 16) ** 2
        self.final = nn.Linear(self.flatten_features, 1)

    def score(self, x):
        cfg = self.config
        if x.dim() != 4 or x.shape[1] != cfg.in_channels or x.shape[2:] != (cfg.face_size, cfg.face_size):
            raise ValidationError(
                f"expected (N,{cfg.in_channels},{cfg.face_size},{cfg.face_size}) input, got {tuple(x.shape)}"
            )
        for block in self.blocks:
            x = block(x)
        return self.final(x.flatten(1))


class WholeCritic(_CriticTrunk):
    """Scores the full cube: input (N, 24, S, S), output (N, 1)."""

    def __init__(self, config=None, **kwargs):
        if config is None:
            kwargs.setdefault("in_channels", 24)
            config = CriticConfig(**kwargs)
        if config.in_channels != 24:
            raise ConfigurationError("whole critic requires in_channels = 24")
        super().__init__(config)

    def forward(self, x):
        return self.score(x)


class SliceCritic(_CriticTrunk):
    """Shared-weight per-face critic; six face scores average to (N, 1).

    Faces are folded into the batch for one vectorized pass; in training
    mode the batch-norm statistics therefore pool over all six faces
    (identical to sequential evaluation once running stats are used).
    """

    def __init__(self, config=None, **kwargs):
        if config is None:
            kwargs.setdefault("in_channels", 4)
            config = CriticConfig(**kwargs)
        if config.in_channels != 4:
            raise ConfigurationError("slice critic requires in_channels = 4")
        super().__init__(config)

    def forward_face(self, x):
        """Score a single face batch: (N, 4, S, S) -> (N, 1)."""
        return self.score(x)

    def forward(self, faces):
        if faces.dim() != 5 or faces.shape[1] != 6:
            raise ValidationError(f"expected (N,6,4,S,S) face stack, got {tuple(faces.shape)}")
        n = faces.shape[0]
        scores = self.forward_face(faces.reshape(n * 6, *faces.shape[2:]))
        return scores.reshape(n, 6).mean(dim=1, keepdim=True)


# ---------------------------------------------------------------------------
# face-batch helpers
# ---------------------------------------------------------------------------


def _check_face_stack(rgb, mask):
    if rgb.dim() != 5 or rgb.shape[1] != 6 or rgb.shape[2] != 3:
        raise ValidationError(f"expected (B,6,3,S,S) faces, got {tuple(rgb.shape)}")
    if mask.shape != (rgb.shape[0], 6, 1, *rgb.shape[3:]):
        raise ValidationError(f"mask shape {tuple(mask.shape)} does not match faces {tuple(rgb.shape)}")


def generate_faces(generator, damaged, masks):
    """Run the generator over a (B, 6, 3, S, S) face stack."""
    _check_face_stack(damaged, masks)
    b = damaged.shape[0]
    out = generator(
        damaged.reshape(b * 6, *damaged.shape[2:]),
        masks.reshape(b * 6, *masks.shape[2:]),
    )
    return out.reshape(b, 6, *out.shape[1:])


def composite(generated, inputs, masks):
    """Keep valid input pixels, take generated pixels in the hole."""
    if generated.shape != inputs.shape:
        raise ValidationError(f"shape mismatch: {tuple(generated.shape)} vs {tuple(inputs.shape)}")
    if masks.shape[-2:] != inputs.shape[-2:]:
        raise ValidationError("mask spatial size does not match images")
    return masks * inputs + (1.0 - masks) * generated


def stack_whole_input(faces_rgb, masks):
    """(B,6,3,S,S) [0,1] faces + (B,6,1,S,S) masks -> (B,24,S,S) critic input."""
    _check_face_stack(faces_rgb, masks)
    b, _, _, s, _ = faces_rgb.shape
    return torch.cat([faces_rgb * 2.0 - 1.0, masks], dim=2).reshape(b, 24, s, s)


def stack_slice_input(faces_rgb, masks):
    """(B,6,3,S,S) [0,1] faces + masks -> (B,6,4,S,S) critic input."""
    _check_face_stack(faces_rgb, masks)
    return torch.cat([faces_rgb * 2.0 - 1.0, masks], dim=2)


def expand_mask_channels(masks, channels):
    """(B,6,1,S,S) masks -> (B, 6*channels, S, S), aligned with the
    face-major channel stacking above."""
    b, _, _, s, _ = masks.shape
    return masks.expand(b, 6, channels, s, s).reshape(b, 6 * channels, s, s)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    generator: Generator
    whole_critic: WholeCritic
    slice_critic: SliceCritic
    trainer_state: dict | None


def save_checkpoint(path, generator, whole_critic, slice_critic, trainer_state=None):
    """Write a versioned checkpoint atomically (temp file then rename)."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "projection_convention": PROJECTION_CONVENTION,
        "generator": {"config": asdict(generator.config), "state": generator.state_dict()},
        "whole_critic": {"config": asdict(whole_critic.config), "state": whole_critic.state_dict()},
        "slice_critic": {"config": asdict(slice_critic.config), "state": slice_critic.state_dict()},
        "trainer": trainer_state,
    }
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def load_checkpoint(path, map_location="cpu"):
    """Load and instantiate the three networks; rejects foreign formats."""
    try:
        payload = torch.load(path, map_location=map_location, weights_only=False)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}")
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a panocube checkpoint")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload['format_version']} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    if payload["projection_convention"] != PROJECTION_CONVENTION:
        raise CheckpointError(
            f"checkpoint uses projection convention {payload['projection_convention']!r}, "
            f"this build uses {PROJECTION_CONVENTION!r}"
        )
    generator = Generator(GeneratorConfig(**payload["generator"]["config"]))
    generator.load_state_dict(payload["generator"]["state"])
    whole = WholeCritic(CriticConfig(**payload["whole_critic"]["config"]))
    whole.load_state_dict(payload["whole_critic"]["state"])
    sliced = SliceCritic(CriticConfig(**payload["slice_critic"]["config"]))
    sliced.load_state_dict(payload["slice_critic"]["state"])
    return Checkpoint(generator, whole, sliced, payload.get("trainer"))
