"""Operation layer and FastAPI application.

Every CLI subcommand maps onto one run_* function here, so local and
remote execution share one code path: the CLI calls these functions
in-process by default, and the HTTP routes are thin wrappers over the
same functions.
"""

import base64
import io

import numpy as np
from PIL import Image

from . import __version__
from .data import (
    faces_to_strip,
    ingest,
    load_samples,
    strip_to_faces,
)
from .errors import PanocubeError, ValidationError
from .evaluation import CheckpointInpainter, comparison_grid, evaluate
from .masking import apply_mask, rect_to_mask, sample_rect_mask
from .projection import (
    PROJECTION_CONVENTION,
    cubemap_to_equirect,
    equirect_to_cubemap,
    mask_to_cubemap,
)
from .schemas import (
    ConvertRequest,
    EvaluateRequest,
    EvaluateResponse,
    GridRequest,
    GridResponse,
    HealthResponse,
    ImageResponse,
    InferRequest,
    MaskRequest,
    MaskResponse,
    MetricsRowModel,
    RectModel,
    TrainRequest,
    TrainResponse,
)
from .training import train


# ---------------------------------------------------------------------------
# base64 PNG transport
# ---------------------------------------------------------------------------


def encode_image(img):
    """Float [0,1] array -> base64 PNG (RGB or single-channel for 2-d)."""
    img = np.asarray(img)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(data, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(b64):
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as exc:
        raise ValidationError(f"cannot decode image payload: {exc}")


def decode_mask(b64):
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            data = np.asarray(im.convert("L"))
    except Exception as exc:
        raise ValidationError(f"cannot decode mask payload: {exc}")
    if not np.isin(data, (0, 255)).all():
        raise ValidationError("mask must contain only 0 and 255")
    return (data == 255).astype(np.float64)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def run_convert(req: ConvertRequest) -> ImageResponse:
    img = decode_image(req.image_b64)
    if req.to == "cubemap":
        faces = equirect_to_cubemap(img, req.face_size, req.filter)
        out = faces_to_strip(faces)
    else:
        faces = strip_to_faces(img)
        out = cubemap_to_equirect(faces, req.width, req.height, req.filter)
    return ImageResponse(image_b64=encode_image(out))


def run_mask(req: MaskRequest) -> MaskResponse:
    mask, rect = sample_rect_mask(req.seed, req.width, req.height)
    return MaskResponse(mask_b64=encode_image(mask), rect=RectModel.from_spec(rect))


def run_infer(req: InferRequest) -> ImageResponse:
    img = decode_image(req.image_b64)
    h, w = img.shape[:2]
    if req.mask_b64 is not None:
        mask = decode_mask(req.mask_b64)
        if mask.shape != (h, w):
            raise ValidationError(f"mask {mask.shape} does not match image {(h, w)}")
    elif req.rect is not None:
        mask = rect_to_mask(req.rect.to_spec(), w, h)
    else:
        raise ValidationError("infer needs a mask or a rectangle spec")
    inpainter = CheckpointInpainter(req.checkpoint_path)
    s = inpainter.face_size
    truth_faces = equirect_to_cubemap(img, s)
    face_masks = mask_to_cubemap(mask, s)
    damaged = [apply_mask(f, m, req.fill) for f, m in zip(truth_faces, face_masks)]
    gen = inpainter(np.stack(damaged), np.stack(face_masks))
    inpainted = [
        m[..., None] * d + (1.0 - m[..., None]) * g
        for d, m, g in zip(damaged, face_masks, gen)
    ]
    out_eq = cubemap_to_equirect(inpainted, w, h)
    # valid pixels pass straight through from the input panorama
    final = mask[..., None] * img + (1.0 - mask[..., None]) * out_eq
    return ImageResponse(image_b64=encode_image(final))


def run_train(req: TrainRequest) -> TrainResponse:
    config = req.config.to_config()
    manifest = ingest(req.data_dir)
    samples = load_samples(manifest, config.face_size, config.seed, fill=req.fill)
    result = train(config, samples, req.out_dir, resume_from=req.resume_from)
    return TrainResponse(
        checkpoint_path=result.checkpoint_path,
        csv_path=result.csv_path,
        jsonl_path=result.jsonl_path,
        steps=result.steps,
        hole_l1_step1=result.hole_l1_step1,
        hole_l1_final=result.hole_l1_final,
    )


def run_evaluate(req: EvaluateRequest) -> EvaluateResponse:
    inpainter = CheckpointInpainter(req.checkpoint_path)
    manifest = ingest(req.data_dir, split="eval")
    report = evaluate(
        manifest,
        inpainter,
        req.hole_seed,
        inpainter.face_size,
        region=req.region,
        fill=req.fill,
        limit=req.limit,
    )
    return EvaluateResponse(
        domain=report.domain,
        region=report.region,
        rows=[
            MetricsRowModel(image_id=r.image_id, ssim=r.ssim, psnr=r.psnr, l1=r.l1, l2=r.l2)
            for r in report.rows
        ],
        summary=report.summary,
    )


def run_grid(req: GridRequest) -> GridResponse:
    inpainter = CheckpointInpainter(req.checkpoint_path)
    manifest = ingest(req.data_dir, split="eval")
    report = evaluate(
        manifest,
        inpainter,
        req.hole_seed,
        inpainter.face_size,
        fill=req.fill,
        collect_images=True,
        limit=req.limit,
    )
    comparison_grid(report.images, req.out_path)
    return GridResponse(out_path=req.out_path, images=len(report.images))


def run_health() -> HealthResponse:
    return HealthResponse(
        status="ok", version=__version__, projection_convention=PROJECTION_CONVENTION
    )


# ---------------------------------------------------------------------------
# FastAPI wiring
# ---------------------------------------------------------------------------


def create_app():
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="panocube", version=__version__)

    @app.exception_handler(PanocubeError)
    async def _domain_error(request: Request, exc: PanocubeError):
        return JSONResponse(
            status_code=400, content={"error": str(exc), "type": type(exc).__name__}
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return run_health()

    @app.post("/convert", response_model=ImageResponse)
    def convert(req: ConvertRequest):
        return run_convert(req)

    @app.post("/mask", response_model=MaskResponse)
    def mask(req: MaskRequest):
        return run_mask(req)

    @app.post("/infer", response_model=ImageResponse)
    def infer(req: InferRequest):
        return run_infer(req)

    @app.post("/train", response_model=TrainResponse)
    def train_route(req: TrainRequest):
        return run_train(req)

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate_route(req: EvaluateRequest):
        return run_evaluate(req)

    @app.post("/grid", response_model=GridResponse)
    def grid(req: GridRequest):
        return run_grid(req)

    return app
