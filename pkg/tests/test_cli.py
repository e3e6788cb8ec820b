"""Command-line interface tests.

``cli(argv)`` runs in-process and returns the exit code, so most tests
need no subprocess.  Exit-code contract: 0 success, 1 domain/validation
failure with a structured JSON message on stderr, 2 usage error.  The
--server path is exercised by monkeypatching httpx.post onto the ASGI
app, and one subprocess test covers the installed entry point.
"""

from __future__ import annotations

import asyncio
import json
import subprocess
import sys

import httpx
import numpy as np
import pytest

from panocube.cli import cli
from panocube.data import load_image, load_mask, save_image, synthesize_panorama
from panocube.masking import sample_rect_mask
from panocube.service import create_app


@pytest.fixture(scope="module")
def pano_png(tmp_path_factory):
    """Quantized 128x64 panorama on disk."""
    path = tmp_path_factory.mktemp("cli") / "pano.png"
    save_image(path, synthesize_panorama(2, 128, 64))
    return path


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def _stderr_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


# ── usage errors ────────────────────────────────────────────────────────

class TestUsage:

    def test_unknown_flag_exits_2(self, pano_png, tmp_path, capsys):
        code = cli(["convert", "--to", "cubemap", str(pano_png),
                    str(tmp_path / "o.png"), "--bogus"])
        assert code == 2

    def test_missing_subcommand_exits_2(self, capsys):
        assert cli([]) == 2

    def test_unknown_subcommand_exits_2(self, capsys):
        assert cli(["frobnicate"]) == 2

    def test_help_exits_0(self, capsys):
        assert cli(["--help"]) == 0
        assert "subcommand" in capsys.readouterr().out or True

    def test_missing_input_file_exits_1(self, tmp_path, capsys):
        code = cli(["convert", "--to", "cubemap", str(tmp_path / "absent.png"),
                    str(tmp_path / "o.png")])
        assert code == 1
        err = _stderr_json(capsys)
        assert err["type"] == "FileNotFoundError"

    def test_domain_error_exits_1_with_structured_message(self, tmp_path,
                                                          capsys):
        square = tmp_path / "square.png"
        save_image(square, np.full((64, 64, 3), 0.5))
        code = cli(["convert", "--to", "cubemap", str(square),
                    str(tmp_path / "o.png")])
        assert code == 1
        err = _stderr_json(capsys)
        assert err["type"] == "ValidationError"
        assert "W = 2H" in err["error"]


# ── convert ─────────────────────────────────────────────────────────────

class TestConvert:

    def test_pattern_output_writes_six_default_size_faces(self, tmp_path,
                                                          capsys):
        # canonical example: 512x256 input, %s output pattern, default
        # face size 256 -> six 256x256 face files
        src = tmp_path / "in.png"
        save_image(src, synthesize_panorama(0, 512, 256))
        code = cli(["convert", "--to", "cubemap", str(src),
                    str(tmp_path / "out_%s.png")])
        assert code == 0
        written = _stdout_json(capsys)["written"]
        assert len(written) == 6
        tags = [p.rsplit("out_", 1)[1] for p in written]
        assert tags == ["F.png", "R.png", "B.png", "L.png", "T.png", "D.png"]
        for p in written:
            assert load_image(p).shape == (256, 256, 3)

    def test_strip_output_and_round_trip(self, pano_png, tmp_path, capsys):
        strip = tmp_path / "strip.png"
        assert cli(["convert", "--to", "cubemap", str(pano_png), str(strip),
                    "--face-size", "32"]) == 0
        assert load_image(strip).shape == (32, 192, 3)
        back = tmp_path / "back.png"
        assert cli(["convert", "--to", "equirect", str(strip), str(back),
                    "--width", "128", "--height", "64"]) == 0
        orig = load_image(pano_png)
        out = load_image(back)
        assert out.shape == orig.shape
        assert np.abs(out - orig).mean() < 0.07

    def test_six_file_pattern_input(self, pano_png, tmp_path, capsys):
        pattern = tmp_path / "f_%s.png"
        assert cli(["convert", "--to", "cubemap", str(pano_png), str(pattern),
                    "--face-size", "32"]) == 0
        back = tmp_path / "eq.png"
        assert cli(["convert", "--to", "equirect", str(pattern), str(back),
                    "--width", "128", "--height", "64"]) == 0
        assert load_image(back).shape == (64, 128, 3)


# ── mask ────────────────────────────────────────────────────────────────

class TestMask:

    def test_seeded_mask_matches_library_draw(self, tmp_path, capsys):
        out = tmp_path / "mask.png"
        code = cli(["mask", "--width", "128", "--height", "64", "--seed", "7",
                    "--output", str(out)])
        assert code == 0
        stdout = _stdout_json(capsys)
        mask, rect = sample_rect_mask(7, 128, 64)
        assert np.array_equal(load_mask(out), mask)
        assert stdout["rect"] == {"x0": rect.x0, "y0": rect.y0,
                                  "width": rect.width, "height": rect.height}

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        assert cli(["mask", "--seed", "3", "--output", str(a)]) == 0
        assert cli(["mask", "--seed", "3", "--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


# ── train ───────────────────────────────────────────────────────────────

class TestTrain:

    def test_config_file_with_flag_override(self, pano_dir, tmp_path, capsys):
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "face_size = 16\nbatch_size = 2\nmax_steps = 3\nseed = 3\n"
            "checkpoint_interval = 100\n"
        )
        out = tmp_path / "run"
        code = cli(["train", "--config", str(cfg), "--data", str(pano_dir),
                    "--out", str(out), "--max-steps", "2"])
        assert code == 0
        body = _stdout_json(capsys)
        assert body["steps"] == 2  # flag wins over the file value
        assert (out / "checkpoint_final.pt").exists()
        log_lines = (out / "losses.csv").read_text().splitlines()
        assert len(log_lines) == 1 + 2  # header plus one row per step

    def test_bad_config_file_exits_1(self, pano_dir, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("face_size 16\n")
        code = cli(["train", "--config", str(cfg), "--data", str(pano_dir),
                    "--out", str(tmp_path / "run")])
        assert code == 1
        assert _stderr_json(capsys)["type"] == "ConfigurationError"


# ── infer ───────────────────────────────────────────────────────────────

class TestInfer:

    def test_all_valid_mask_reproduces_input(self, pano_png, tiny_checkpoint,
                                             tmp_path, capsys):
        # canonical example: an all-valid mask must reproduce the input
        mask_png = tmp_path / "ones.png"
        from panocube.data import save_mask
        save_mask(mask_png, np.ones((64, 128), dtype=np.float32))
        out = tmp_path / "out.png"
        code = cli(["infer", "--checkpoint", str(tiny_checkpoint),
                    "--input", str(pano_png), "--mask", str(mask_png),
                    "--output", str(out)])
        assert code == 0
        a = np.rint(load_image(pano_png) * 255)
        b = np.rint(load_image(out) * 255)
        assert np.abs(a - b).max() <= 1.0

    def test_rect_hole_preserves_valid_region(self, pano_png, tiny_checkpoint,
                                              tmp_path, capsys):
        out = tmp_path / "out.png"
        code = cli(["infer", "--checkpoint", str(tiny_checkpoint),
                    "--input", str(pano_png), "--rect", "40,20,30,15",
                    "--output", str(out)])
        assert code == 0
        a = np.rint(load_image(pano_png) * 255)
        b = np.rint(load_image(out) * 255)
        inside = np.zeros((64, 128), dtype=bool)
        inside[20:35, 40:70] = True
        assert np.array_equal(a[~inside], b[~inside])

    def test_needs_mask_or_rect(self, pano_png, tiny_checkpoint, tmp_path,
                                capsys):
        code = cli(["infer", "--checkpoint", str(tiny_checkpoint),
                    "--input", str(pano_png),
                    "--output", str(tmp_path / "o.png")])
        assert code == 1
        assert _stderr_json(capsys)["type"] == "ValidationError"

    def test_malformed_rect_exits_1(self, pano_png, tiny_checkpoint, tmp_path,
                                    capsys):
        code = cli(["infer", "--checkpoint", str(tiny_checkpoint),
                    "--input", str(pano_png), "--rect", "40,oops",
                    "--output", str(tmp_path / "o.png")])
        assert code == 1
        assert "x0,y0,width,height" in _stderr_json(capsys)["error"]

    def test_missing_checkpoint_exits_1(self, pano_png, tmp_path, capsys):
        code = cli(["infer", "--checkpoint", str(tmp_path / "none.pt"),
                    "--input", str(pano_png), "--rect", "4,4,8,8",
                    "--output", str(tmp_path / "o.png")])
        assert code == 1
        assert _stderr_json(capsys)["type"] == "CheckpointError"


# ── evaluate / grid ─────────────────────────────────────────────────────

class TestEvaluateAndGrid:

    def test_evaluate_writes_reports_client_side(self, pano_dir,
                                                 tiny_checkpoint, tmp_path,
                                                 capsys):
        out_csv = tmp_path / "report.csv"
        out_json = tmp_path / "report.json"
        code = cli(["evaluate", "--checkpoint", str(tiny_checkpoint),
                    "--data", str(pano_dir), "--limit", "2",
                    "--out-csv", str(out_csv), "--out-json", str(out_json)])
        assert code == 0
        body = _stdout_json(capsys)
        assert body["images"] == 2
        assert set(body["summary"]) == {"ssim", "psnr", "l1", "l2"}
        lines = out_csv.read_text().splitlines()
        assert lines[1] == "image_id,ssim,psnr,l1,l2"
        assert len(lines) == 2 + 2 + 1
        rows = json.loads(out_json.read_text())["rows"]
        assert [r["image_id"] for r in rows] == ["pano_0.png", "pano_1.png"]

    def test_grid_writes_panel_png(self, pano_dir, tiny_checkpoint, tmp_path,
                                   capsys):
        out = tmp_path / "grid.png"
        code = cli(["grid", "--checkpoint", str(tiny_checkpoint),
                    "--data", str(pano_dir), "--limit", "1",
                    "--output", str(out)])
        assert code == 0
        assert _stdout_json(capsys)["images"] == 1
        assert load_image(out).shape == (256, 3 * 512, 3)


# ── --server mode ───────────────────────────────────────────────────────

def _asgi_post(app):
    """A stand-in for httpx.post that routes into the ASGI app."""

    def post(url, json=None, timeout=None):
        path = "/" + url.split("/", 3)[3]

        async def go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://svc") as c:
                return await c.post(path, json=json, timeout=timeout)

        return asyncio.run(go())

    return post


class TestServerMode:

    def test_mask_through_server_matches_local(self, tmp_path, capsys,
                                               monkeypatch):
        monkeypatch.setattr(httpx, "post", _asgi_post(create_app()))
        remote, local = tmp_path / "r.png", tmp_path / "l.png"
        assert cli(["mask", "--seed", "4", "--output", str(remote),
                    "--server", "http://svc"]) == 0
        assert cli(["mask", "--seed", "4", "--output", str(local)]) == 0
        assert remote.read_bytes() == local.read_bytes()

    def test_server_error_surfaces_as_exit_1(self, tmp_path, capsys,
                                             monkeypatch):
        def failing_post(url, json=None, timeout=None):
            return httpx.Response(
                400, json={"error": "boom", "type": "ValidationError"},
                request=httpx.Request("POST", url),
            )

        monkeypatch.setattr(httpx, "post", failing_post)
        code = cli(["mask", "--output", str(tmp_path / "m.png"),
                    "--server", "http://svc"])
        assert code == 1
        err = _stderr_json(capsys)
        assert "boom" in err["error"]
        assert "ValidationError" in err["error"]

    def test_serve_wires_uvicorn(self, monkeypatch):
        import uvicorn
        calls = {}

        def fake_run(app, host=None, port=None):
            calls["host"], calls["port"] = host, port

        monkeypatch.setattr(uvicorn, "run", fake_run)
        assert cli(["serve", "--host", "0.0.0.0", "--port", "9001"]) == 0
        assert calls == {"host": "0.0.0.0", "port": 9001}


# ── installed entry point ───────────────────────────────────────────────

class TestEntryPoint:

    def test_console_script_smoke(self, tmp_path):
        out = tmp_path / "mask.png"
        proc = subprocess.run(
            [sys.executable, "-m", "panocube.cli", "mask", "--width", "64",
             "--height", "32", "--output", str(out)],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
        assert json.loads(proc.stdout)["written"] == [str(out)]
