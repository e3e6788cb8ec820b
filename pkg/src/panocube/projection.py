"""Equirectangular / cube-map projection with a fixed spherical convention.

Convention (normative for the whole package):

* An equirect image has W = 2H. Pixel (x, y) maps to longitude
  theta = 2*pi*((x + 0.5) / W) - pi and latitude
  phi = pi*((y + 0.5) / H) - pi/2, so the top row looks up.
* A direction is the unit vector (cos(phi)*sin(theta), sin(phi),
  cos(phi)*cos(theta)). The y axis points down in world space, matching
  the image convention, so "up" is -y.
* Cube faces are ordered [F, R, B, L, T, D]. Face selection takes the
  largest-magnitude component: F:+z, R:+x, B:-z, L:-x, T:-y, D:+y.
  Exact ties are broken by the fixed priority F > R > B > L > T > D.
* Within-face coordinates (u, v) in [0, 1)^2 satisfy, with a = 2u - 1 and
  b = 2v - 1 (u rightward, v downward on the stored face image):

      F: (a, b, 1)   R: (1, b, -a)   B: (-a, b, -1)
      L: (-1, b, a)  T: (a, -1, b)   D: (a, 1, -b)

  normalized to unit length. Adjacent face edges agree exactly, so the
  six faces tile the sphere seamlessly.

Color images are resampled bilinearly (horizontal wrap, vertical clamp
on the equirect side; edge clamp on faces); masks use nearest-neighbor
so they stay binary.
"""

from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, ValidationError

FACE_ORDER = ("F", "R", "B", "L", "T", "D")
FACE_F, FACE_R, FACE_B, FACE_L, FACE_T, FACE_D = range(6)

# Tag stored in checkpoints so weights are never reused under a different
# sampling convention.
PROJECTION_CONVENTION = "equirect-ydown-FRBLTD-v1"

_FILTERS = ("bilinear", "nearest")


def _check_filter(filter):
    if filter not in _FILTERS:
        raise ConfigurationError(f"unknown filter {filter!r}, expected one of {_FILTERS}")


def pixel_to_direction(img_dims, pixel):
    """Map equirect pixel coordinates (fractional allowed) to unit directions.

    ``pixel`` is (x, y) with scalars or same-shape arrays. Returns an array
    of shape pixel_shape + (3,).
    """
    w, h = img_dims
    x = np.asarray(pixel[0], dtype=np.float64)
    y = np.asarray(pixel[1], dtype=np.float64)
    if np.any(x < 0) or np.any(x >= w) or np.any(y < 0) or np.any(y >= h):
        raise ValidationError(f"pixel out of range for {w}x{h} image")
    theta = 2.0 * np.pi * ((x + 0.5) / w) - np.pi
    phi = np.pi * ((y + 0.5) / h) - np.pi / 2.0
    cos_phi = np.cos(phi)
    return np.stack(
        [cos_phi * np.sin(theta), np.sin(phi), cos_phi * np.cos(theta)], axis=-1
    )


def direction_to_pixel(img_dims, d):
    """Inverse of pixel_to_direction; returns fractional (x, y) arrays.

    x lies in [-0.5, W - 0.5) and y in [-0.5, H - 0.5]; sampling handles
    the horizontal wrap and vertical clamp.
    """
    w, h = img_dims
    d = np.asarray(d, dtype=np.float64)
    theta = np.arctan2(d[..., 0], d[..., 2])
    # guard asin domain against norm rounding
    phi = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    x = (theta + np.pi) / (2.0 * np.pi) * w - 0.5
    y = (phi + np.pi / 2.0) / np.pi * h - 0.5
    return x, y


def face_uv_to_direction(face, u, v):
    """Map face index and within-face (u, v) to unit directions.

    Accepts scalars or broadcastable arrays; returns shape + (3,).
    """
    face = np.asarray(face)
    a = 2.0 * np.asarray(u, dtype=np.float64) - 1.0
    b = 2.0 * np.asarray(v, dtype=np.float64) - 1.0
    face, a, b = np.broadcast_arrays(face, a, b)
    if face.size and (face.min() < 0 or face.max() > 5):
        raise ValidationError("face index must be in 0..5")
    shape = a.shape
    face, a, b = face.ravel(), a.ravel(), b.ravel()
    one = np.ones_like(a)
    d = np.empty((a.size, 3), dtype=np.float64)
    for f, comps in (
        (FACE_F, (a, b, one)),
        (FACE_R, (one, b, -a)),
        (FACE_B, (-a, b, -one)),
        (FACE_L, (-one, b, a)),
        (FACE_T, (a, -one, b)),
        (FACE_D, (a, one, -b)),
    ):
        sel = face == f
        if np.any(sel):
            for c in range(3):
                d[sel, c] = comps[c][sel]
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d.reshape(shape + (3,))


def direction_to_face_uv(d):
    """Map unit directions to (face, u, v); exact inverse of
    face_uv_to_direction on face interiors.

    For a single vector returns (int, float, float); for an array of shape
    (..., 3) returns arrays (face, u, v).
    """
    d = np.asarray(d, dtype=np.float64)
    scalar = d.ndim == 1
    shape = d.shape[:-1]
    d = d.reshape(-1, 3)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-9):
        raise ValidationError("directions must be unit-norm within 1e-9")
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    ax, ay, az = np.abs(dx), np.abs(dy), np.abs(dz)
    m = np.maximum(np.maximum(ax, ay), az)
    # first true condition wins: priority F > R > B > L > T > D
    face = np.select(
        [
            (az == m) & (dz > 0),
            (ax == m) & (dx > 0),
            (az == m) & (dz < 0),
            (ax == m) & (dx < 0),
            (ay == m) & (dy < 0),
        ],
        [FACE_F, FACE_R, FACE_B, FACE_L, FACE_T],
        default=FACE_D,
    )
    a = np.empty_like(dx)
    b = np.empty_like(dx)
    for f, fa, fb in (
        (FACE_F, lambda s: dx[s] / dz[s], lambda s: dy[s] / dz[s]),
        (FACE_R, lambda s: -dz[s] / dx[s], lambda s: dy[s] / dx[s]),
        (FACE_B, lambda s: dx[s] / dz[s], lambda s: -dy[s] / dz[s]),
        (FACE_L, lambda s: -dz[s] / dx[s], lambda s: -dy[s] / dx[s]),
        (FACE_T, lambda s: -dx[s] / dy[s], lambda s: -dz[s] / dy[s]),
        (FACE_D, lambda s: dx[s] / dy[s], lambda s: -dz[s] / dy[s]),
    ):
        sel = face == f
        if np.any(sel):
            a[sel] = fa(sel)
            b[sel] = fb(sel)
    u = (a + 1.0) / 2.0
    v = (b + 1.0) / 2.0
    if scalar:
        return int(face[0]), float(u[0]), float(v[0])
    return face.reshape(shape), u.reshape(shape), v.reshape(shape)


# ---------------------------------------------------------------------------
# cached sampling grids
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _face_sample_coords(w, h, s):
    """Equirect (x, y) sample coordinates for every face pixel: two arrays
    of shape (6, s, s)."""
    idx = (np.arange(s) + 0.5) / s
    u, v = np.meshgrid(idx, idx)  # u varies along columns, v along rows
    faces = np.arange(6)[:, None, None]
    d = face_uv_to_direction(faces, u[None], v[None])
    x, y = direction_to_pixel((w, h), d)
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y


@lru_cache(maxsize=16)
def _equirect_lookup(w, h):
    """(face, u, v) arrays of shape (h, w) for every equirect pixel center."""
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    x, y = np.meshgrid(xs, ys)
    d = pixel_to_direction((w, h), (x, y))
    face, u, v = direction_to_face_uv(d)
    face = face.astype(np.int8)
    for arr in (face, u, v):
        arr.setflags(write=False)
    return face, u, v


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def sample_equirect(img, x, y, filter="bilinear"):
    """Sample an equirect image at fractional pixel coordinates.

    Longitude wraps (x is periodic mod W); latitude clamps to the pole rows.
    """
    _check_filter(filter)
    img = np.asarray(img)
    h, w = img.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if filter == "nearest":
        xi = np.floor(x + 0.5).astype(np.int64) % w
        yi = np.clip(np.floor(y + 0.5).astype(np.int64), 0, h - 1)
        return img[yi, xi]
    x0 = np.floor(x)
    fx = x - x0
    x0 = x0.astype(np.int64) % w
    x1 = (x0 + 1) % w
    yc = np.clip(y, 0.0, float(h - 1))
    y0 = np.floor(yc)
    fy = yc - y0
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _sample_face(face_img, px, py, filter):
    """Sample one face image at fractional pixel coordinates, edge-clamped."""
    s = face_img.shape[0]
    if filter == "nearest":
        xi = np.clip(np.floor(px + 0.5).astype(np.int64), 0, s - 1)
        yi = np.clip(np.floor(py + 0.5).astype(np.int64), 0, s - 1)
        return face_img[yi, xi]
    pxc = np.clip(px, 0.0, float(s - 1))
    pyc = np.clip(py, 0.0, float(s - 1))
    x0 = np.floor(pxc)
    y0 = np.floor(pyc)
    fx = pxc - x0
    fy = pyc - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = np.minimum(x0 + 1, s - 1)
    y1 = np.minimum(y0 + 1, s - 1)
    if face_img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = face_img[y0, x0] * (1.0 - fx) + face_img[y0, x1] * fx
    bot = face_img[y1, x0] * (1.0 - fx) + face_img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _check_equirect(img):
    img = np.asarray(img)
    if img.ndim not in (2, 3):
        raise ValidationError(f"expected HxW or HxWxC image, got shape {img.shape}")
    h, w = img.shape[:2]
    if w != 2 * h:
        raise ValidationError(f"equirect image must satisfy W = 2H, got {w}x{h}")
    return img, w, h


def equirect_to_cubemap(img, face_size, filter="bilinear"):
    """Project an equirect image to six face images [F, R, B, L, T, D].

    Returns a (6, S, S) or (6, S, S, C) float64 array in strip order.
    """
    _check_filter(filter)
    img, w, h = _check_equirect(img)
    if face_size < 4:
        raise ConfigurationError(f"face_size must be >= 4, got {face_size}")
    if np.issubdtype(img.dtype, np.floating):
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise ValidationError("equirect pixel values must lie in [0, 1]")
        img = np.asarray(img, dtype=np.float64)
    x, y = _face_sample_coords(w, h, face_size)
    return np.stack([sample_equirect(img, x[f], y[f], filter) for f in range(6)])


def _check_faces(faces):
    faces = [np.asarray(f) for f in faces]
    if len(faces) != 6:
        raise ValidationError(f"cube map must have exactly 6 faces, got {len(faces)}")
    s = faces[0].shape[0]
    for f in faces:
        if f.shape[:2] != (s, s) or f.shape != faces[0].shape:
            raise ValidationError("all faces must be square and identically shaped")
    return faces, s


def cubemap_to_equirect(faces, width, height, filter="bilinear"):
    """Assemble an equirect image of the requested size from six faces."""
    _check_filter(filter)
    faces, s = _check_faces(faces)
    if width != 2 * height:
        raise ConfigurationError(f"output must satisfy W = 2H, got {width}x{height}")
    face_idx, u, v = _equirect_lookup(width, height)
    out_shape = (height, width) + faces[0].shape[2:]
    dtype = faces[0].dtype if filter == "nearest" else np.float64
    out = np.zeros(out_shape, dtype=dtype)
    for f in range(6):
        sel = face_idx == f
        if not np.any(sel):
            continue
        px = u[sel] * s - 0.5
        py = v[sel] * s - 0.5
        out[sel] = _sample_face(faces[f], px, py, filter)
    return out


def mask_to_cubemap(mask, face_size):
    """Reproject a binary equirect mask to six face masks (nearest-neighbor).

    Output is a strictly binary (6, S, S) array with the input's dtype.
    """
    mask, w, h = _check_equirect(mask)
    if mask.ndim != 2:
        raise ValidationError("mask must be a single-channel HxW array")
    if not np.isin(mask, (0, 1)).all():
        raise ValidationError("mask values must be exactly 0 or 1")
    if face_size < 4:
        raise ConfigurationError(f"face_size must be >= 4, got {face_size}")
    x, y = _face_sample_coords(w, h, face_size)
    return np.stack([sample_equirect(mask, x[f], y[f], "nearest") for f in range(6)])
