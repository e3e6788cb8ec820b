"""Dataset ingestion, image/mask/cube-map file I/O, and preprocessing.

All file writes are atomic (temp file in the target directory, then
rename). Images are 8-bit RGB on disk and float [0, 1] in memory; masks
are single-channel PNGs holding exactly 0 and 255. A cube map serializes
either as one 6-tile horizontal strip in F, R, B, L, T, D order (the
canonical form) or as six files tagged _F, _R, _B, _L, _T, _D.
"""

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, ValidationError
from .masking import RectSpec, apply_mask, sample_rect_mask
from .projection import FACE_ORDER, equirect_to_cubemap, mask_to_cubemap, pixel_to_direction

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _atomic_write(path, write_fn):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load_image(path):
    """Decode an 8-bit RGB image file to a float64 (H, W, 3) array in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise ValidationError(f"cannot decode image {path}: {exc}")
    return np.asarray(rgb, dtype=np.float64) / 255.0


def save_image(path, img):
    """Quantize a float [0, 1] image to 8 bits and write it atomically."""
    img = np.asarray(img)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    pil = Image.fromarray(data)
    fmt = "JPEG" if str(path).lower().endswith((".jpg", ".jpeg")) else "PNG"
    _atomic_write(path, lambda tmp: pil.save(tmp, format=fmt))


def load_mask(path):
    """Read a {0, 255} single-channel PNG as a float32 {0, 1} mask."""
    with Image.open(path) as im:
        data = np.asarray(im.convert("L"))
    if not np.isin(data, (0, 255)).all():
        raise ValidationError(f"mask {path} must contain only 0 and 255")
    return (data == 255).astype(np.float32)


def save_mask(path, mask):
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValidationError("mask values must be exactly 0 or 1")
    data = (mask * 255).astype(np.uint8)
    pil = Image.fromarray(data, mode="L")
    _atomic_write(path, lambda tmp: pil.save(tmp, format="PNG"))


def resize_area(img, width, height):
    """Area-averaging resize (suppresses aliasing ahead of projection)."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] == (height, width):
        return img
    channels = []
    for c in range(img.shape[2]):
        plane = Image.fromarray(img[:, :, c].astype(np.float32), mode="F")
        plane = plane.resize((width, height), Image.Resampling.BOX)
        channels.append(np.asarray(plane, dtype=np.float64))
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


# ---------------------------------------------------------------------------
# cube-map serialization
# ---------------------------------------------------------------------------


def faces_to_strip(faces):
    """Six (S, S, C) faces -> one (S, 6S, C) strip in F,R,B,L,T,D order."""
    if len(faces) != 6:
        raise ValidationError(f"cube map must have 6 faces, got {len(faces)}")
    return np.concatenate(list(faces), axis=1)


def strip_to_faces(strip):
    strip = np.asarray(strip)
    s = strip.shape[0]
    if strip.shape[1] != 6 * s:
        raise ValidationError(f"strip must be S x 6S, got {strip.shape[:2]}")
    return [strip[:, i * s : (i + 1) * s] for i in range(6)]


def save_cubemap(path, faces, layout=None):
    """Write a cube map as a strip, or as six files when ``path`` contains
    a %s placeholder (or layout="files")."""
    path = str(path)
    if layout is None:
        layout = "files" if "%s" in path else "strip"
    if layout == "strip":
        save_image(path, faces_to_strip(faces))
        return [path]
    if layout != "files":
        raise ConfigurationError(f"unknown cube-map layout {layout!r}")
    if "%s" not in path:
        raise ConfigurationError("files layout needs a %s placeholder in the path")
    written = []
    for name, face in zip(FACE_ORDER, faces):
        target = path % name
        save_image(target, face)
        written.append(target)
    return written


def load_cubemap(path):
    """Read a cube map saved by save_cubemap (strip or %s file pattern)."""
    path = str(path)
    if "%s" in path:
        return [load_image(path % name) for name in FACE_ORDER]
    return strip_to_faces(load_image(path))


# ---------------------------------------------------------------------------
# dataset ingestion and preprocessing
# ---------------------------------------------------------------------------


@dataclass
class DatasetManifest:
    root: str
    split: str
    category: str
    image_ids: list
    skipped: list


def ingest(root, split="train", category="all"):
    """Discover decodable PNG/JPEG files under ``root`` (stable id order)."""
    rootp = Path(root)
    if not rootp.is_dir():
        raise ConfigurationError(f"dataset directory not found: {root}")
    ids, skipped = [], []
    for p in sorted(rootp.rglob("*")):
        if not p.is_file() or p.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        rel = p.relative_to(rootp).as_posix()
        try:
            with Image.open(p) as im:
                im.load()
        except OSError as exc:
            skipped.append((rel, str(exc)))
            continue
        ids.append(rel)
    if not ids:
        raise ConfigurationError(f"no images found under {root}")
    return DatasetManifest(str(rootp), split, category, ids, skipped)


@dataclass
class TrainingSample:
    """One panorama prepared for training, all arrays float32 in [0, 1]."""

    image_id: str
    truth_faces: np.ndarray    # (6, S, S, 3)
    face_masks: np.ndarray     # (6, S, S), {0,1}
    damaged_faces: np.ndarray  # (6, S, S, 3)
    rect: RectSpec
    equirect_mask: np.ndarray  # (H, W), {0,1}


def preprocess(source, face_size, rng, *, image_id=None, equirect_size=(512, 256), fill=0.5):
    """File path or (H, W, 3) array -> TrainingSample.

    Pipeline: area resize to ``equirect_size``, project to faces, sample one
    equirect hole rectangle, reproject the mask, apply the fill per face.
    Deterministic given (source, rng state).
    """
    w, h = equirect_size
    if w != 2 * h:
        raise ConfigurationError(f"equirect size must satisfy W = 2H, got {w}x{h}")
    if isinstance(source, (str, os.PathLike)):
        img = load_image(source)
        image_id = image_id or str(source)
    else:
        img = np.asarray(source, dtype=np.float64)
        image_id = image_id or "array"
    img = resize_area(img, w, h)
    truth = equirect_to_cubemap(img, face_size)
    eq_mask, rect = sample_rect_mask(rng, w, h)
    face_masks = mask_to_cubemap(eq_mask, face_size)
    damaged = [apply_mask(f, m, fill) for f, m in zip(truth, face_masks)]
    return TrainingSample(
        image_id=image_id,
        truth_faces=np.stack(truth).astype(np.float32),
        face_masks=np.stack(face_masks).astype(np.float32),
        damaged_faces=np.stack(damaged).astype(np.float32),
        rect=rect,
        equirect_mask=eq_mask,
    )


def load_samples(manifest, face_size, seed, *, equirect_size=(512, 256), fill=0.5):
    """Preprocess every manifest image; per-image rngs derive from
    (seed, position) so results do not depend on how work is batched."""
    samples = []
    for idx, image_id in enumerate(manifest.image_ids):
        rng = np.random.default_rng([seed, idx])
        samples.append(
            preprocess(
                Path(manifest.root) / image_id,
                face_size,
                rng,
                image_id=image_id,
                equirect_size=equirect_size,
                fill=fill,
            )
        )
    return samples


def synthesize_panorama(seed, width=512, height=256, components=6):
    """Deterministic smooth test panorama: random low-frequency fields of
    the view direction, so the image is seam-free and pole-consistent."""
    rng = np.random.default_rng(seed)
    xs, ys = np.meshgrid(np.arange(float(width)), np.arange(float(height)))
    d = pixel_to_direction((width, height), (xs, ys))
    img = np.zeros((height, width, 3))
    freqs = rng.normal(scale=2.5, size=(components, 3))
    phases = rng.uniform(0, 2 * np.pi, size=components)
    gains = rng.normal(scale=0.6, size=(components, 3))
    for k in range(components):
        wave = np.sin(d @ freqs[k] + phases[k])
        img += wave[..., None] * gains[k]
    return 0.5 + 0.45 * np.tanh(img)
