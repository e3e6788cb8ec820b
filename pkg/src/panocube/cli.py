"""Command-line interface: a thin client over the service operations.

Every subcommand builds the same request model the HTTP API accepts and
either executes it in-process (default) or posts it to a running service
via --server. File reading/writing for image payloads happens on the
client side; dataset/checkpoint/output paths resolve where the operation
runs.
"""

import argparse
import json
import sys
from dataclasses import asdict, fields

import numpy as np

from . import schemas, service
from .data import load_image, load_mask, save_cubemap, save_image, save_mask, strip_to_faces
from .errors import PanocubeError, ValidationError
from .evaluation import EvalReport, MetricsRow, write_report_csv, write_report_json
from .training import TrainConfig, apply_overrides, load_config

_ROUTES = {
    "/convert": (service.run_convert, schemas.ImageResponse),
    "/mask": (service.run_mask, schemas.MaskResponse),
    "/infer": (service.run_infer, schemas.ImageResponse),
    "/train": (service.run_train, schemas.TrainResponse),
    "/evaluate": (service.run_evaluate, schemas.EvaluateResponse),
    "/grid": (service.run_grid, schemas.GridResponse),
}


def _call(args, route, request):
    """Dispatch a request in-process or to --server."""
    op, response_cls = _ROUTES[route]
    if not args.server:
        return op(request)
    import httpx

    url = args.server.rstrip("/") + route
    resp = httpx.post(url, json=request.model_dump(), timeout=None)
    if resp.status_code != 200:
        try:
            body = resp.json()
            raise PanocubeError(f"server error ({body.get('type')}): {body.get('error')}")
        except ValueError:
            raise PanocubeError(f"server returned HTTP {resp.status_code}")
    return response_cls(**resp.json())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_convert(args):
    if args.to == "cubemap":
        img = load_image(args.input)
    else:
        # six-file pattern or strip, both accepted
        from .data import load_cubemap

        img = np.concatenate(load_cubemap(args.input), axis=1)
    req = schemas.ConvertRequest(
        image_b64=service.encode_image(img),
        to=args.to,
        face_size=args.face_size,
        width=args.width,
        height=args.height,
        filter=args.filter,
    )
    resp = _call(args, "/convert", req)
    out = service.decode_image(resp.image_b64)
    if args.to == "cubemap":
        written = save_cubemap(args.output, strip_to_faces(out))
    else:
        save_image(args.output, out)
        written = [args.output]
    print(json.dumps({"written": written}))
    return 0


def _cmd_mask(args):
    req = schemas.MaskRequest(width=args.width, height=args.height, seed=args.seed)
    resp = _call(args, "/mask", req)
    mask = service.decode_mask(resp.mask_b64)
    save_mask(args.output, mask)
    print(json.dumps({"written": [args.output], "rect": resp.rect.model_dump()}))
    return 0


def _cmd_train(args):
    config = load_config(args.config) if args.config else TrainConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(TrainConfig)
        if getattr(args, f.name) is not None
    }
    config = apply_overrides(config, overrides)
    req = schemas.TrainRequest(
        data_dir=args.data,
        out_dir=args.out,
        config=schemas.TrainConfigModel(**asdict(config)),
        resume_from=args.resume,
        fill=args.fill,
    )
    resp = _call(args, "/train", req)
    print(resp.model_dump_json())
    return 0


def _cmd_infer(args):
    img = load_image(args.input)
    mask_b64 = None
    rect = None
    if args.mask:
        mask_b64 = service.encode_image(load_mask(args.mask))
    elif args.rect:
        try:
            x0, y0, w, h = (int(v) for v in args.rect.split(","))
        except ValueError:
            raise ValidationError("--rect expects x0,y0,width,height integers")
        rect = schemas.RectModel(x0=x0, y0=y0, width=w, height=h)
    req = schemas.InferRequest(
        checkpoint_path=args.checkpoint,
        image_b64=service.encode_image(img),
        mask_b64=mask_b64,
        rect=rect,
        fill=args.fill,
    )
    resp = _call(args, "/infer", req)
    save_image(args.output, service.decode_image(resp.image_b64))
    print(json.dumps({"written": [args.output]}))
    return 0


def _cmd_evaluate(args):
    req = schemas.EvaluateRequest(
        checkpoint_path=args.checkpoint,
        data_dir=args.data,
        hole_seed=args.hole_seed,
        region=args.region,
        fill=args.fill,
        limit=args.limit,
    )
    resp = _call(args, "/evaluate", req)
    report = EvalReport(
        domain=resp.domain,
        region=resp.region,
        rows=[MetricsRow(**r.model_dump()) for r in resp.rows],
        summary=resp.summary,
    )
    written = []
    if args.out_csv:
        written.append(write_report_csv(report, args.out_csv))
    if args.out_json:
        written.append(write_report_json(report, args.out_json))
    print(json.dumps({"summary": resp.summary, "images": len(resp.rows), "written": written}))
    return 0


def _cmd_grid(args):
    req = schemas.GridRequest(
        checkpoint_path=args.checkpoint,
        data_dir=args.data,
        out_path=args.output,
        hole_seed=args.hole_seed,
        fill=args.fill,
        limit=args.limit,
    )
    resp = _call(args, "/grid", req)
    print(resp.model_dump_json())
    return 0


def _cmd_serve(args):
    import uvicorn

    uvicorn.run(service.create_app(), host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None, help="base URL of a running panocube service")

    parser = argparse.ArgumentParser(prog="panocube", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="equirect <-> cubemap files")
    p.add_argument("--to", choices=("cubemap", "equirect"), required=True)
    p.add_argument("input", help="input image (equirect PNG/JPEG, strip, or %%s face pattern)")
    p.add_argument("output", help="output path; a %%s placeholder writes six face files")
    p.add_argument("--face-size", type=int, default=256, dest="face_size")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--filter", choices=("bilinear", "nearest"), default="bilinear")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("mask", parents=[common], help="sample and save a hole mask")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("train", parents=[common], help="run training from a config")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--data", required=True, help="directory of equirect panoramas")
    p.add_argument("--out", required=True, help="output directory (checkpoints, logs)")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--fill", type=float, default=0.5)
    for f in fields(TrainConfig):
        p.add_argument(f"--{f.name.replace('_', '-')}", type=f.type, default=None, dest=f.name)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", parents=[common], help="inpaint a damaged panorama")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="damaged equirect panorama")
    p.add_argument("--mask", default=None, help="mask PNG ({0,255}, 0 = hole)")
    p.add_argument("--rect", default=None, help="hole rectangle as x0,y0,width,height")
    p.add_argument("--fill", type=float, default=0.5)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="metrics over a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--hole-seed", type=int, default=0, dest="hole_seed")
    p.add_argument("--region", choices=("full", "hole"), default="full")
    p.add_argument("--fill", type=float, default=0.5)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out-csv", default=None, dest="out_csv")
    p.add_argument("--out-json", default=None, dest="out_json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("grid", parents=[common], help="comparison grid PNG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--hole-seed", type=int, default=0, dest="hole_seed")
    p.add_argument("--fill", type=float, default=0.5)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def cli(argv=None):
    """Entry point returning an exit code: 0 ok, 1 validation/domain error,
    2 usage error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PanocubeError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": str(exc), "type": "FileNotFoundError"}), file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
