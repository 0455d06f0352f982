import json
import struct

import numpy as np
import pytest

from exgs import codec, ply
from exgs.cli import load_rig, main, run_pipeline, save_rig
from exgs.imageio import load_png
from exgs.metrics import psnr
from exgs.model import GaussianCloud
from exgs.rasterizer import render
from exgs.synth import SynthSpec, make_orbit_cameras, make_scene


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cloud = make_scene(SynthSpec("textured-room", 3000, seed=7, extent=4.0))
    (d / "room.ply").write_bytes(ply.save_ply(cloud))
    save_rig(d / "rig.json", make_orbit_cameras(3, 1.0, width=48, height=40, elevation=0.2))
    (d / "empty.ply").write_bytes(ply.save_ply(GaussianCloud.empty(sh_degree=3)))
    return d


def run(*argv):
    return main([str(a) for a in argv])


def test_info(workspace, capsys):
    assert run("info", workspace / "room.ply") == 0
    out = capsys.readouterr().out
    assert "count: 3000" in out and "sh_degree: 3" in out
    assert f"raw_size: {(workspace / 'room.ply').stat().st_size} bytes" in out


def test_score_prune_compress_decompress(workspace, tmp_path):
    ws = workspace
    assert run("score", ws / "room.ply", "--cameras", ws / "rig.json", "-o", tmp_path / "s.bin") == 0
    assert run("score", ws / "room.ply", "--cameras", ws / "rig.json", "--mode", "contribution",
               "-o", tmp_path / "s.csv") == 0
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "index,score"
    (n,) = struct.unpack_from("<I", (tmp_path / "s.bin").read_bytes())
    assert n == 3000
    assert run("prune", ws / "room.ply", "--scores", tmp_path / "s.bin", "--ratio", "0.2", "--voxel-auto",
               "--amplify", "1", "--kept-out", tmp_path / "k.bin", "-o", tmp_path / "p.ply") == 0
    pruned = ply.load_ply((tmp_path / "p.ply").read_bytes())
    assert pruned.count == 600
    assert run("compress", tmp_path / "p.ply", "-o", tmp_path / "p.exgs") == 0
    assert run("decompress", tmp_path / "p.exgs", "-o", tmp_path / "q.ply") == 0
    back = ply.load_ply((tmp_path / "q.ply").read_bytes())
    assert back == codec.half_round_trip(pruned.truncate_sh())


def test_render_png_and_mask(workspace, tmp_path):
    ws = workspace
    assert run("render", ws / "room.ply", "--camera", f"{ws / 'rig.json'}#1", "-o", tmp_path / "a.png",
               "--mask", tmp_path / "m.png") == 0
    img = load_png(tmp_path / "a.png")
    assert img.shape == (40, 48, 3) and img.max() > 0
    assert load_png(tmp_path / "m.png", gray=True).shape == (40, 48)


def test_render_empty_scene_is_black(workspace, tmp_path):
    assert run("render", workspace / "empty.ply", "--camera", workspace / "rig.json", "-o", tmp_path / "a.png",
               "--mask", tmp_path / "m.png") == 0
    assert np.all(load_png(tmp_path / "a.png") == 0)
    assert np.all(load_png(tmp_path / "m.png", gray=True) == 0)


def test_render_exgs_input(workspace, tmp_path):
    assert run("compress", workspace / "room.ply", "-o", tmp_path / "r.exgs") == 0
    assert run("render", tmp_path / "r.exgs", "--camera", f"{workspace / 'rig.json'}#0", "-o", tmp_path / "a.png") == 0


def test_restore_and_eval(workspace, tmp_path):
    ws = workspace
    run("render", ws / "room.ply", "--camera", f"{ws / 'rig.json'}#2", "-o", tmp_path / "a.png",
        "--mask", tmp_path / "m.png")
    assert run("restore", tmp_path / "a.png", "--mask", tmp_path / "m.png", "--iters", "20",
               "-o", tmp_path / "r.png") == 0
    assert run("eval", tmp_path / "a.png", tmp_path / "a.png", "-o", tmp_path / "e.json") == 0
    rep = json.loads((tmp_path / "e.json").read_text())
    assert rep == {"psnr": 99.0, "ssim": 1.0, "width": 48, "height": 40}
    assert run("eval", tmp_path / "a.png", tmp_path / "r.png", "--resize", "32x32", "-o", tmp_path / "f.json") == 0
    assert json.loads((tmp_path / "f.json").read_text())["width"] == 32


def test_pipeline_outputs_and_determinism(workspace, tmp_path):
    ws = workspace
    assert run("pipeline", ws / "room.ply", "--cameras", ws / "rig.json", "--ratio", "0.1", "-o", tmp_path / "a") == 0
    assert run("pipeline", ws / "room.ply", "--cameras", ws / "rig.json", "--ratio", "0.1", "-o", tmp_path / "b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(["metrics.json", "pruned.ply", "scene.exgs", "scores.bin", "kept.bin"]
                           + [f"{k}_{i:03d}.png" for k in ("reference", "render", "mask", "restored") for i in range(3)])
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    m = json.loads((tmp_path / "a" / "metrics.json").read_text())
    assert m["schema"] == 1 and m["kept_count"] == 300
    assert m["ratio"] == pytest.approx(m["source_bytes"] / m["compressed_bytes"])
    assert len(m["views"]) == 3
    # rerun over an existing directory replaces it
    assert run("pipeline", ws / "room.ply", "--cameras", ws / "rig.json", "--ratio", "0.1", "-o", tmp_path / "a") == 0


def test_pipeline_lossless_settings_only_quantise(workspace, tmp_path):
    m = run_pipeline(workspace / "room.ply", workspace / "rig.json", tmp_path / "o", 1.0, lam=0.0)
    assert m["kept_count"] == 3000
    cloud = ply.load_ply((workspace / "room.ply").read_bytes())
    half = codec.half_round_trip(cloud.truncate_sh())
    for cam, v in zip(load_rig(workspace / "rig.json"), m["views"]):
        assert v["degraded"]["psnr"] >= 50
        a = render(half, cam).color
        b = render(codec.decompress((tmp_path / "o" / "scene.exgs").read_bytes()), cam).color
        assert psnr(a, b) == 99.0


def test_pipeline_failure_leaves_nothing(workspace, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cameras": [{"width": 8, "height": 8, "fx": 1, "fy": 1, "cx": 4, "cy": 4,
                                            "world_to_camera": [2] + [0] * 15}]}))
    assert run("pipeline", workspace / "room.ply", "--cameras", bad, "--ratio", "0.1", "-o", tmp_path / "o") == 4
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.json"]


def test_synth_subcommand(tmp_path):
    assert run("synth", "--kind", "planar-grid", "--count", "16", "--sh-degree", "0", "--rig", tmp_path / "r.json",
               "--views", "2", "-o", tmp_path / "g.ply") == 0
    assert ply.load_ply((tmp_path / "g.ply").read_bytes()).count == 16
    assert len(load_rig(tmp_path / "r.json")) == 2


@pytest.mark.parametrize("argv, code", [
    ([], 2),
    (["frobnicate"], 2),
    (["prune", "x.ply"], 2),
    (["eval", "a.png", "b.png", "--resize", "big", "-o", "r.json"], None),
])
def test_usage_errors(argv, code, tmp_path, capsys):
    if code is None:
        from exgs.imageio import save_png
        save_png(tmp_path / "a.png", np.zeros((12, 12, 3)))
        argv = ["eval", tmp_path / "a.png", tmp_path / "a.png", "--resize", "big", "-o", tmp_path / "r.json"]
        code = 2
    assert run(*argv) == code
    assert capsys.readouterr().err.strip()


def test_io_and_invariant_errors(workspace, tmp_path, capsys):
    assert run("info", tmp_path / "missing.ply") == 3
    (tmp_path / "junk.ply").write_bytes(b"not a ply")
    assert run("info", tmp_path / "junk.ply") == 3
    (tmp_path / "junk.exgs").write_bytes(b"EXGS\x01")
    assert run("decompress", tmp_path / "junk.exgs", "-o", tmp_path / "o.ply") == 3
    assert run("render", workspace / "room.ply", "--camera", f"{workspace / 'rig.json'}#9", "-o", tmp_path / "a.png") == 2
    run("score", workspace / "room.ply", "--cameras", workspace / "rig.json", "-o", tmp_path / "s.bin")
    assert run("prune", workspace / "room.ply", "--scores", tmp_path / "s.bin", "--ratio", "1.5",
               "-o", tmp_path / "p.ply") == 4
    err = capsys.readouterr().err.strip().splitlines()
    assert all(line.startswith("exgs") for line in err)
