from __future__ import annotations

import json
import shutil
import time
from importlib import resources

import pytest
from PIL import Image

from fpbp import formats
from fpbp.cli import main


@pytest.fixture()
def demo(tmp_path):
    with resources.as_file(resources.files("fpbp").joinpath("data")) as d:
        for f in d.iterdir():
            if f.suffix in (".json", ".png"):
                shutil.copy(f, tmp_path / f.name)
    return tmp_path


def _simulate(demo, out, seed=0):
    assert main(["simulate", str(demo / "demo_scenario.json"), "--out", str(out), "--seed", str(seed)]) == 0
    return out


def test_preprocess_is_idempotent(demo, capsys):
    a, b = demo / "a.map.json", demo / "b.map.json"
    assert main(["preprocess", "--map", str(demo / "demo_manifest.json"), "--out", str(a)]) == 0
    assert main(["preprocess", "--map", str(demo / "demo_manifest.json"), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "5 rooms, 4 doors" in capsys.readouterr().out
    assert json.loads(a.read_text())["schema"] == formats.MAP_SCHEMA


def test_preprocess_reports_stray_pixel(demo, capsys):
    img = Image.open(demo / "demo_floor0.png").convert("RGB")
    img.putpixel((7, 5), (1, 2, 3))
    img.save(demo / "bad.png")
    rc = main(["preprocess", "--map", str(demo / "demo_manifest.json"), "--raster", str(demo / "bad.png"),
               "--out", str(demo / "x.json")])
    assert rc == 3
    assert "x=7, y=5" in capsys.readouterr().err
    assert not (demo / "x.json").exists()


def test_simulate_is_seeded(demo):
    a = _simulate(demo, demo / "a", 1)
    b = _simulate(demo, demo / "b", 1)
    c = _simulate(demo, demo / "c", 2)
    for name in ("events.jsonl", "truth.jsonl", "beacons.json", "floor0.map.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "events.jsonl").read_bytes() != (c / "events.jsonl").read_bytes()


@pytest.mark.parametrize("algo", ["pdr", "bp", "fpbp", "gml"])
def test_locate_then_eval(demo, algo, capsys):
    run = _simulate(demo, demo / "run")
    truth = formats.read_jsonl(run / "truth.jsonl", formats.TRUTH_SCHEMA)
    out = demo / f"{algo}.jsonl"
    args = ["locate", "--map", str(run / "floor0.map.json"), "--beacons", str(run / "beacons.json"),
            "--log", str(run / "events.jsonl"), "--algo", algo, "--seed", "0", "--out", str(out)]
    if algo == "pdr":
        args += ["--init", str(truth[0]["x"] - 0.6), str(truth[0]["y"])]
    assert main(args) == 0
    recs = formats.read_jsonl(out, formats.OUTPUTS_SCHEMA)
    assert len(recs) == len(truth) and recs[0]["mode"] == algo
    capsys.readouterr()
    assert main(["eval", "--log", str(out), "--truth", str(run / "truth.jsonl"),
                 "--map", str(run / "floor0.map.json"), "--out", str(demo / "m")]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split() == ["algo", "MPE", "P50", "P80", "STD", "N", "walls"]
    assert table[1].split()[0] == algo
    m = json.loads((demo / "m" / "metrics.json").read_text())
    assert m["schema"] == formats.METRICS_SCHEMA and m["mpe"] < 10
    if algo == "fpbp":
        assert m["wall_crossing_count"] == 0


def test_eval_per_step_and_mismatch(demo, capsys):
    run = _simulate(demo, demo / "run")
    out = demo / "o.jsonl"
    assert main(["locate", "--map", str(run / "floor0.map.json"), "--beacons", str(run / "beacons.json"),
                 "--log", str(run / "events.jsonl"), "--out", str(out), "--debug-trace", str(demo / "t.jsonl")]) == 0
    assert formats.read_jsonl(demo / "t.jsonl", formats.TRACE_SCHEMA)
    capsys.readouterr()
    assert main(["eval", "--log", str(out), "--truth", str(run / "truth.jsonl"), "--per-step",
                 "--out", str(demo / "m")]) == 0
    lines = capsys.readouterr().out.splitlines()
    n = len(formats.read_jsonl(out, formats.OUTPUTS_SCHEMA))
    assert lines[2] == "step,error" and len(lines) == 3 + n
    assert len((demo / "m" / "errors.csv").read_text().splitlines()) == n + 1
    assert (demo / "m" / "cdf.csv").read_text().startswith("error,cumulative_fraction")
    short = demo / "short.jsonl"
    formats.write_jsonl(short, formats.OUTPUTS_SCHEMA, formats.read_jsonl(out, formats.OUTPUTS_SCHEMA)[:-1])
    assert main(["eval", "--log", str(short), "--truth", str(run / "truth.jsonl")]) == 3


def test_config_errors_exit_2(demo, capsys):
    run = _simulate(demo, demo / "run")
    cfg = demo / "cfg.json"
    cfg.write_text(json.dumps({"gml": {"d_zero": 3}}))
    base = ["locate", "--map", str(run / "floor0.map.json"), "--beacons", str(run / "beacons.json"),
            "--log", str(run / "events.jsonl"), "--out", str(demo / "o.jsonl")]
    assert main(base + ["--config", str(cfg)]) == 2
    assert "d_zero" in capsys.readouterr().err
    d = json.loads((run / "floor0.map.json").read_text())
    d["schema"] = "fpbp.map/2"
    (run / "floor0.map.json").write_text(json.dumps(d))
    assert main(base) == 2
    assert main(["locate", "--beacons", "x", "--log", "y"]) == 2


def test_demo_end_to_end_is_fast(demo):
    t0 = time.perf_counter()
    run = _simulate(demo, demo / "run")
    assert main(["locate", "--map", str(demo / "demo_manifest.json"), "--beacons", str(run / "beacons.json"),
                 "--log", str(run / "events.jsonl"), "--out", str(demo / "o.jsonl")]) == 0
    assert main(["eval", "--log", str(demo / "o.jsonl"), "--truth", str(run / "truth.jsonl")]) == 0
    assert time.perf_counter() - t0 < 10.0
