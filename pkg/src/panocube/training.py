"""Adversarial training loop: per-step critic updates with masked gradient
penalties, then one generator update, with checkpointing and loss logging.

Determinism contract: a fixed (seed, config, dataset) reproduces the loss
trajectory bit-for-bit, and a resumed run continues it exactly; optimizer
moments, the shuffle order, and every RNG stream are checkpointed. Loss
logs are buffered in memory and rewritten atomically at each checkpoint
event, one CSV and one line-delimited JSON record per step.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, NumericalError, ValidationError
from .networks import (
    CriticConfig,
    Generator,
    GeneratorConfig,
    SliceCritic,
    WholeCritic,
    composite,
    expand_mask_channels,
    generate_faces,
    load_checkpoint,
    save_checkpoint,
    stack_slice_input,
    stack_whole_input,
)
from .objectives import (
    ObjectiveWeights,
    critic_loss,
    generator_adversarial_loss,
    masked_gradient_penalty,
    masked_l1,
)

LOG_FIELDS = ("step", "g_adv", "g_l1", "d_whole", "d_slice", "gp_whole", "gp_slice", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 4e-4
    batch_size: int = 8
    face_size: int = 256
    critic_steps_per_gen_step: int = 1
    max_steps: int = 1000
    seed: int = 0
    checkpoint_interval: int = 100
    adversarial_weight: float = 0.001
    gradient_penalty_weight: float = 10.0
    l1_weight: float = 1.2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.critic_steps_per_gen_step < 1:
            raise ConfigurationError("critic_steps_per_gen_step must be >= 1")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be >= 0")
        if self.checkpoint_interval < 1:
            raise ConfigurationError("checkpoint_interval must be >= 1")

    @property
    def weights(self):
        return ObjectiveWeights(
            adversarial=self.adversarial_weight,
            gradient_penalty=self.gradient_penalty_weight,
            l1=self.l1_weight,
        )


def apply_overrides(config, mapping):
    """Override TrainConfig fields from a {name: value-or-string} mapping."""
    valid = {f.name: f.type for f in fields(TrainConfig)}
    kwargs = asdict(config)
    for key, value in mapping.items():
        if key not in valid:
            raise ConfigurationError(f"unknown config key {key!r}")
        if value is None:
            continue
        try:
            kwargs[key] = valid[key](value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"config key {key!r}: cannot parse {value!r}")
    return TrainConfig(**kwargs)


def load_config(path):
    """Parse a flat ``key = value`` config file mirroring TrainConfig."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    return apply_overrides(TrainConfig(), mapping)


def save_config(config, path):
    lines = [f"{f.name} = {getattr(config, f.name)!r}" for f in fields(TrainConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class StepReport:
    step: int
    g_adv: float
    g_l1: float
    d_whole: float
    d_slice: float
    gp_whole: float
    gp_slice: float
    wall_ms: float


@dataclass
class TrainResult:
    checkpoint_path: str
    csv_path: str
    jsonl_path: str
    steps: int
    hole_l1_step1: float
    hole_l1_final: float
    reports: list


class Trainer:
    """Owns the three networks, their optimizers, and all RNG streams."""

    def __init__(self, config, samples, out_dir, resume_from=None):
        if not samples:
            raise ConfigurationError("empty dataset")
        self.config = config
        self.out_dir = Path(out_dir)
        s = config.face_size

        truth = np.stack([smp.truth_faces for smp in samples])
        masks = np.stack([smp.face_masks for smp in samples])[:, :, None]
        damaged = np.stack([smp.damaged_faces for smp in samples])
        if truth.shape[1:] != (6, s, s, 3):
            raise ValidationError(
                f"samples have face stack {truth.shape[1:]}, config wants (6, {s}, {s}, 3)"
            )
        # stored (N,6,S,S,3) -> tensors (N,6,3,S,S)
        self.truth = torch.from_numpy(truth).permute(0, 1, 4, 2, 3).contiguous()
        self.damaged = torch.from_numpy(damaged).permute(0, 1, 4, 2, 3).contiguous()
        self.masks = torch.from_numpy(masks).contiguous()
        if not torch.isin(self.masks, torch.tensor([0.0, 1.0])).all():
            raise ValidationError("face masks must be exactly binary")

        torch.manual_seed(config.seed)
        self.generator = Generator(GeneratorConfig(face_size=s))
        self.whole_critic = WholeCritic(CriticConfig(face_size=s, in_channels=24))
        self.slice_critic = SliceCritic(CriticConfig(face_size=s, in_channels=4))
        betas = (0.5, 0.9)  # gradient-penalty convention
        lr = config.learning_rate
        self.opt_gen = torch.optim.Adam(self.generator.parameters(), lr=lr, betas=betas)
        self.opt_whole = torch.optim.Adam(self.whole_critic.parameters(), lr=lr, betas=betas)
        self.opt_slice = torch.optim.Adam(self.slice_critic.parameters(), lr=lr, betas=betas)

        self.gp_rng = torch.Generator()
        self.gp_rng.manual_seed(config.seed + 0x9E3779B9)
        self.shuffle_rng = np.random.default_rng(config.seed)
        self.step = 0
        self._perm = []
        self._cursor = 0
        self.reports = []
        self.hole_l1_step1 = None
        if resume_from is not None:
            self._restore(resume_from)

    # -- batching -----------------------------------------------------------

    def _next_batch(self):
        # always a full batch: the shuffled index stream wraps across epochs,
        # so dataset sizes not divisible by batch_size never produce a short
        # batch (BatchNorm in train mode needs more than one sample)
        n = self.truth.shape[0]
        idx = []
        while len(idx) < self.config.batch_size:
            if self._cursor >= len(self._perm):
                self._perm = [int(i) for i in self.shuffle_rng.permutation(n)]
                self._cursor = 0
            take = min(self.config.batch_size - len(idx), len(self._perm) - self._cursor)
            idx.extend(self._perm[self._cursor : self._cursor + take])
            self._cursor += take
        sel = torch.tensor(idx, dtype=torch.long)
        return self.truth[sel], self.masks[sel], self.damaged[sel]

    # -- single optimization step -------------------------------------------

    def train_step(self, batch):
        """One full step: critic updates (with gradient penalties) then one
        generator update. Returns a StepReport with every loss component."""
        t0 = time.perf_counter()
        truth, masks, damaged = batch
        cfg = self.config
        w = cfg.weights
        s = cfg.face_size

        # one generator forward reused for both phases
        gen = generate_faces(self.generator, damaged, masks)
        inpainted = composite(gen, damaged, masks)
        fake = inpainted.detach()

        real_whole = stack_whole_input(truth, masks)
        real_slice = stack_slice_input(truth, masks)
        mask24 = expand_mask_channels(masks, 4)
        mask_face = masks.reshape(-1, 1, s, s)

        for _ in range(cfg.critic_steps_per_gen_step):
            fake_whole = stack_whole_input(fake, masks)
            d_whole = critic_loss(self.whole_critic(real_whole), self.whole_critic(fake_whole))
            gp_whole = masked_gradient_penalty(
                self.whole_critic, real_whole, fake_whole, mask24, self.gp_rng
            )
            self.opt_whole.zero_grad()
            (d_whole + w.gradient_penalty * gp_whole).backward()
            self.opt_whole.step()

            fake_slice = stack_slice_input(fake, masks)
            d_slice = critic_loss(self.slice_critic(real_slice), self.slice_critic(fake_slice))
            gp_slice = masked_gradient_penalty(
                self.slice_critic.forward_face,
                real_slice.reshape(-1, 4, s, s),
                fake_slice.reshape(-1, 4, s, s),
                mask_face,
                self.gp_rng,
            )
            self.opt_slice.zero_grad()
            (d_slice + w.gradient_penalty * gp_slice).backward()
            self.opt_slice.step()

        g_adv = generator_adversarial_loss(
            self.whole_critic(stack_whole_input(inpainted, masks))
        ) + generator_adversarial_loss(self.slice_critic(stack_slice_input(inpainted, masks)))
        g_l1 = masked_l1(gen, truth, masks)
        self.opt_gen.zero_grad()
        (w.adversarial * g_adv + w.l1 * g_l1).backward()
        self.opt_gen.step()

        self.step += 1
        report = StepReport(
            step=self.step,
            g_adv=g_adv.detach().item(),
            g_l1=g_l1.detach().item(),
            d_whole=d_whole.detach().item(),
            d_slice=d_slice.detach().item(),
            gp_whole=gp_whole.detach().item(),
            gp_slice=gp_slice.detach().item(),
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        )
        for name in LOG_FIELDS[1:-1]:
            if not np.isfinite(getattr(report, name)):
                raise NumericalError(f"training diverged at step {self.step}: {name} is non-finite")
        return report

    # -- probes ---------------------------------------------------------------

    @torch.no_grad()
    def hole_region_l1(self):
        """Mean absolute error over hole pixels of the whole training set,
        generator in eval mode (the convergence probe)."""
        was_training = self.generator.training
        self.generator.eval()
        total, count = 0.0, 0.0
        n = self.truth.shape[0]
        for lo in range(0, n, self.config.batch_size):
            sel = slice(lo, lo + self.config.batch_size)
            gen = generate_faces(self.generator, self.damaged[sel], self.masks[sel])
            hole = 1.0 - self.masks[sel]
            total += float(((gen - self.truth[sel]).abs() * hole).sum())
            count += float(hole.sum()) * 3.0
        if was_training:
            self.generator.train()
        return total / count

    # -- persistence ----------------------------------------------------------

    def _log_paths(self):
        return self.out_dir / "losses.csv", self.out_dir / "losses.jsonl"

    def _flush_logs(self):
        csv_path, jsonl_path = self._log_paths()
        rows = [asdict(r) for r in self.reports]
        csv_text = ",".join(LOG_FIELDS) + "\n"
        for row in rows:
            csv_text += ",".join(str(row[k]) for k in LOG_FIELDS) + "\n"
        jsonl_text = "".join(json.dumps(row) + "\n" for row in rows)
        for path, text in ((csv_path, csv_text), (jsonl_path, jsonl_text)):
            tmp = f"{path}.tmp{os.getpid()}"
            try:
                with open(tmp, "w") as fh:
                    fh.write(text)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.remove(tmp)
        return str(csv_path), str(jsonl_path)

    def _trainer_state(self):
        return {
            "step": self.step,
            "config": asdict(self.config),
            "optimizers": {
                "generator": self.opt_gen.state_dict(),
                "whole": self.opt_whole.state_dict(),
                "slice": self.opt_slice.state_dict(),
            },
            "torch_rng": torch.get_rng_state(),
            "gp_rng": self.gp_rng.get_state(),
            "numpy_rng": self.shuffle_rng.bit_generator.state,
            "perm": list(self._perm),
            "cursor": self._cursor,
            "hole_l1_step1": self.hole_l1_step1,
        }

    def save(self, path):
        return save_checkpoint(
            path, self.generator, self.whole_critic, self.slice_critic, self._trainer_state()
        )

    def _restore(self, path):
        ckpt = load_checkpoint(path)
        state = ckpt.trainer_state
        if state is None:
            raise ConfigurationError(f"{path} has no trainer state, cannot resume")
        saved = dict(state["config"])
        current = asdict(self.config)
        saved.pop("max_steps"), current.pop("max_steps")
        if saved != current:
            raise ConfigurationError("resume config differs from checkpoint config")
        self.generator.load_state_dict(ckpt.generator.state_dict())
        self.whole_critic.load_state_dict(ckpt.whole_critic.state_dict())
        self.slice_critic.load_state_dict(ckpt.slice_critic.state_dict())
        self.opt_gen.load_state_dict(state["optimizers"]["generator"])
        self.opt_whole.load_state_dict(state["optimizers"]["whole"])
        self.opt_slice.load_state_dict(state["optimizers"]["slice"])
        torch.set_rng_state(state["torch_rng"])
        self.gp_rng.set_state(state["gp_rng"])
        self.shuffle_rng.bit_generator.state = state["numpy_rng"]
        self._perm = list(state["perm"])
        self._cursor = state["cursor"]
        self.step = state["step"]
        self.hole_l1_step1 = state["hole_l1_step1"]
        # keep earlier log rows so the continued log stays contiguous
        _, jsonl_path = self._log_paths()
        if jsonl_path.exists():
            for line in jsonl_path.read_text().splitlines():
                row = json.loads(line)
                if row["step"] <= self.step:
                    self.reports.append(StepReport(**row))

    # -- main loop -------------------------------------------------------------

    def run(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        cfg = self.config
        final_path = self.out_dir / "checkpoint_final.pt"
        while self.step < cfg.max_steps:
            report = self.train_step(self._next_batch())
            self.reports.append(report)
            if report.step == 1:
                self.hole_l1_step1 = self.hole_region_l1()
            if report.step % cfg.checkpoint_interval == 0 and report.step < cfg.max_steps:
                self.save(self.out_dir / f"checkpoint_step{report.step:06d}.pt")
                self._flush_logs()
        hole_l1_final = self.hole_region_l1()
        self.save(final_path)
        csv_path, jsonl_path = self._flush_logs()
        return TrainResult(
            checkpoint_path=str(final_path),
            csv_path=csv_path,
            jsonl_path=jsonl_path,
            steps=self.step,
            hole_l1_step1=self.hole_l1_step1,
            hole_l1_final=hole_l1_final,
            reports=list(self.reports),
        )


def train(config, samples, out_dir, resume_from=None):
    """Run the full loop; returns a TrainResult (final checkpoint + logs)."""
    return Trainer(config, samples, out_dir, resume_from=resume_from).run()
