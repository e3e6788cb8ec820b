"""Image-quality metrics (SSIM, PSNR, L1, L2) and the evaluation protocol.

Metrics operate on float images in [0, 1]. PSNR is 10*log10(1/MSE) capped
at 99.0 dB (the identical-image sentinel); L1/L2 are reported on the 0-255
scale. SSIM is the canonical single-scale form with an 11x11 Gaussian
window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, averaged over valid windows
and channels.

The evaluation protocol mirrors training end to end: per image, a seeded
hole rectangle is sampled in equirect space, the damaged panorama is
projected to faces, inpainted, composited, reprojected, and scored against
the ground truth on the full equirect image (default) or on the hole's
bounding box (region="hole").
"""

import json
import os
from dataclasses import dataclass

import numpy as np
import torch
from scipy.signal import fftconvolve

from .data import DatasetManifest, load_image, resize_area, save_image
from .errors import ValidationError
from .masking import apply_mask, sample_rect_mask
from .networks import generate_faces, load_checkpoint
from .projection import cubemap_to_equirect, equirect_to_cubemap, mask_to_cubemap

PSNR_CAP_DB = 99.0
_C1 = 0.01**2
_C2 = 0.03**2


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """10*log10(1/MSE) on [0,1]-scale images, capped at 99.0 dB."""
    a, b = _check_pair(a, b)
    for name, x in (("first", a), ("second", b)):
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValidationError(f"{name} image values must lie in [0, 1]")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a, b, window_size=11, sigma=1.5):
    """Single-scale SSIM over valid Gaussian windows, mean over channels."""
    a, b = _check_pair(a, b)
    if min(a.shape[:2]) < window_size:
        raise ValidationError(
            f"image {a.shape[:2]} smaller than the {window_size}x{window_size} window"
        )
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    kernel = _gaussian_window(window_size, sigma)
    values = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mu_x = fftconvolve(x, kernel, mode="valid")
        mu_y = fftconvolve(y, kernel, mode="valid")
        s_xx = fftconvolve(x * x, kernel, mode="valid") - mu_x * mu_x
        s_yy = fftconvolve(y * y, kernel, mode="valid") - mu_y * mu_y
        s_xy = fftconvolve(x * y, kernel, mode="valid") - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + _C1) * (2.0 * s_xy + _C2)
        den = (mu_x * mu_x + mu_y * mu_y + _C1) * (s_xx + s_yy + _C2)
        values.append(num / den)
    return float(np.mean(values))


def l1_distance(a, b):
    """Mean absolute pixel difference on the 0-255 scale."""
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)) * 255.0)


def l2_distance(a, b):
    """Root-mean-square pixel difference on the 0-255 scale."""
    a, b = _check_pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)) * 255.0)


# ---------------------------------------------------------------------------
# evaluation protocol
# ---------------------------------------------------------------------------


@dataclass
class MetricsRow:
    image_id: str
    ssim: float
    psnr: float
    l1: float
    l2: float


@dataclass
class EvalReport:
    domain: str
    region: str
    rows: list
    summary: dict
    images: list | None = None  # (damaged, inpainted, truth) equirect triples


class CheckpointInpainter:
    """Callable (damaged_faces, face_masks) -> generated faces, backed by a
    trained generator in eval mode."""

    def __init__(self, checkpoint_path):
        ckpt = load_checkpoint(checkpoint_path)
        self.generator = ckpt.generator.eval()
        self.face_size = ckpt.generator.config.face_size

    @torch.no_grad()
    def __call__(self, damaged_faces, face_masks):
        damaged = (
            torch.from_numpy(np.asarray(damaged_faces, dtype=np.float32))
            .permute(0, 3, 1, 2)[None]
        )
        masks = torch.from_numpy(np.asarray(face_masks, dtype=np.float32))[None, :, None]
        gen = generate_faces(self.generator, damaged, masks)
        return gen[0].permute(0, 2, 3, 1).numpy().astype(np.float64)


def _dataset_items(dataset):
    if isinstance(dataset, DatasetManifest):
        root = dataset.root
        return [(image_id, os.path.join(root, image_id)) for image_id in sorted(dataset.image_ids)]
    return sorted(((str(i), img) for i, img in dataset), key=lambda kv: kv[0])


def evaluate(
    dataset,
    inpainter,
    hole_seed,
    face_size,
    *,
    region="full",
    fill=0.5,
    equirect_size=(512, 256),
    collect_images=False,
    limit=None,
):
    """Score an inpainter over a dataset; returns an EvalReport.

    ``dataset`` is a DatasetManifest or a sequence of (image_id, image)
    pairs; ``inpainter`` maps (damaged_faces, face_masks) arrays to
    generated faces. Rows come out in image-id order and each image's hole
    derives from (hole_seed, row index), independent of batching.
    """
    if region not in ("full", "hole"):
        raise ValidationError(f"unknown region {region!r}")
    w, h = equirect_size
    items = _dataset_items(dataset)
    if limit is not None:
        items = items[:limit]
    if not items:
        raise ValidationError("empty evaluation dataset")
    rows, triples = [], []
    for idx, (image_id, img) in enumerate(items):
        if isinstance(img, (str, os.PathLike)):
            img = load_image(img)
        img = resize_area(np.asarray(img, dtype=np.float64), w, h)
        rng = np.random.default_rng([int(hole_seed), idx])
        eq_mask, rect = sample_rect_mask(rng, w, h)
        truth_faces = equirect_to_cubemap(img, face_size)
        face_masks = mask_to_cubemap(eq_mask, face_size)
        damaged_faces = [apply_mask(f, m, fill) for f, m in zip(truth_faces, face_masks)]
        gen = inpainter(np.stack(damaged_faces), np.stack(face_masks))
        inpainted_faces = [
            m[..., None] * d + (1.0 - m[..., None]) * g
            for d, m, g in zip(damaged_faces, face_masks, gen)
        ]
        out_eq = cubemap_to_equirect(inpainted_faces, w, h)
        final = eq_mask[..., None] * img + (1.0 - eq_mask[..., None]) * out_eq
        if region == "hole":
            sl = np.s_[rect.y0 : rect.y0 + rect.height, rect.x0 : rect.x0 + rect.width]
            ref, out = img[sl], final[sl]
        else:
            ref, out = img, final
        rows.append(
            MetricsRow(
                image_id=image_id,
                ssim=ssim(ref, out),
                psnr=psnr(ref, np.clip(out, 0.0, 1.0)),
                l1=l1_distance(ref, out),
                l2=l2_distance(ref, out),
            )
        )
        if collect_images:
            damaged_eq = apply_mask(img, eq_mask, fill)
            triples.append((damaged_eq, final, img))
    summary = {
        name: float(np.mean([getattr(r, name) for r in rows]))
        for name in ("ssim", "psnr", "l1", "l2")
    }
    return EvalReport("equirect", region, rows, summary, triples if collect_images else None)


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def _atomic_text(path, text):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def write_report_csv(report, path):
    lines = [f"# domain={report.domain} region={report.region}", "image_id,ssim,psnr,l1,l2"]
    for r in report.rows:
        lines.append(f"{r.image_id},{r.ssim},{r.psnr},{r.l1},{r.l2}")
    s = report.summary
    lines.append(f"mean,{s['ssim']},{s['psnr']},{s['l1']},{s['l2']}")
    _atomic_text(path, "\n".join(lines) + "\n")
    return str(path)


def write_report_json(report, path):
    payload = {
        "domain": report.domain,
        "region": report.region,
        "rows": [
            {"image_id": r.image_id, "ssim": r.ssim, "psnr": r.psnr, "l1": r.l1, "l2": r.l2}
            for r in report.rows
        ],
        "summary": report.summary,
    }
    _atomic_text(path, json.dumps(payload, indent=2) + "\n")
    return str(path)


def comparison_grid(triples, path):
    """One row per image: masked input | inpainted | ground truth."""
    if not triples:
        raise ValidationError("no images to arrange")
    rows = [np.concatenate(t, axis=1) for t in triples]
    save_image(path, np.concatenate(rows, axis=0))
    return str(path)
