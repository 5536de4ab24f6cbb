from __future__ import annotations

import csv
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import pytest

from greenlab.cli import Cache, cache_key, dumps, main, parse_parameter_path, run_scenario, validate_config
from greenlab.errors import CacheCorrupt, ConfigInvalid

FREE = {
    "version": 1,
    "name": "fg",
    "walk": {"weights": [0.5, 0.5], "factors": [{"preset": "srw", "rank": 1}, {"preset": "srw", "rank": 1}]},
    "tasks": {"radius": True},
}


def write(tmp_path, cfg, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def with_(cfg, path, value):
    out = json.loads(json.dumps(cfg))
    node = out
    for k in path[:-1]:
        node = node.setdefault(k, {})
    node[path[-1]] = value
    return out


@pytest.mark.parametrize(
    "path,value,pointer",
    [
        (["walk", "bogus"], 1, ""),
        (["tasks", "exponent"], {"N": 1000}, "/tasks/exponent/N"),
        (["numerics", "seriesOrder"], 128, "/numerics/seriesOrder"),
        (["tasks", "sweep"], {"parameter": "weights[0]", "grid": [0.3, 0.3]}, "/tasks/sweep/grid/1"),
        (["tasks", "sweep"], {"parameter": "weights[7]", "grid": [0.3, 0.4]}, "/tasks/sweep/parameter"),
        (["tasks", "monitors"], {"rGrid": [0.5, 0.4]}, "/tasks/monitors/rGrid/1"),
        (["walk", "weights"], [0.5, 0.3, 0.2], "/walk/weights"),
    ],
)
def test_invalid_configs_report_pointer(path, value, pointer):
    with pytest.raises(ConfigInvalid) as exc:
        validate_config(with_(FREE, path, value))
    if pointer:
        assert exc.value.pointer == pointer
    else:
        assert exc.value.pointer in ("", "/walk")


def test_parameter_paths():
    assert parse_parameter_path("weights[0]") == ["weights", 0]
    assert parse_parameter_path("walk.weights[1]") == ["weights", 1]
    assert parse_parameter_path("/walk/laziness") == ["laziness"]


def test_serializer_round_trips_doubles():
    vals = [0.1, 1 / 3, 2 / 3**0.5, 1e-300]
    back = json.loads(dumps({"x": vals, "n": float("nan")}))
    assert back["x"] == vals and back["n"] is None


def test_cache_detects_corruption(tmp_path):
    c = Cache(tmp_path)
    key = cache_key({"a": 1})
    c.store(key, {"report": {"x": 1.5}, "files": {}})
    assert c.load(key)["report"]["x"] == 1.5
    p = c.path(key)
    p.write_text(p.read_text().replace("1.5", "2.5"))
    with pytest.raises(CacheCorrupt):
        c.load(key)
    assert c.load(cache_key({"a": 2})) is None


def test_run_writes_artifacts_and_recovers_from_corrupt_cache(tmp_path, caplog):
    scn = write(tmp_path, FREE)
    cache = tmp_path / "cache"
    rep = run_scenario(scn, out=tmp_path / "o1", cache_root=cache)
    assert abs(rep["R_mu"] - 2 / 3**0.5) < 1e-12
    for name in ("report.json", "series.csv", "excursions.csv"):
        assert (tmp_path / "o1" / name).exists()
    with open(tmp_path / "o1" / "series.csv") as fh:
        assert next(csv.reader(fh))[:2] == ["n", "p_n"]
    for entry in cache.rglob("*.json"):
        entry.write_text("{not json")
    rep2 = run_scenario(scn, out=tmp_path / "o2", cache_root=cache)
    assert "recomputing" in caplog.text
    assert rep2 == rep


def test_cache_hit_is_fast_and_reruns_are_bit_identical(tmp_path):
    scn = write(tmp_path, FREE)
    env = dict(os.environ, GREENLAB_CACHE_DIR=str(tmp_path / "cache"))
    cmd = [sys.executable, "-m", "greenlab.cli", "run", str(scn)]
    subprocess.run(cmd + ["--out", str(tmp_path / "a")], env=env, check=True, capture_output=True)
    t0 = time.perf_counter()
    hit = subprocess.run(cmd + ["--out", str(tmp_path / "b")], env=env, check=True, capture_output=True, text=True)
    assert time.perf_counter() - t0 < 1.0
    assert hit.stdout.startswith("R_mu = 1.1547005383792")
    subprocess.run(cmd + ["--out", str(tmp_path / "c"), "--no-cache"], env=env, check=True, capture_output=True)
    for name in ("report.json", "series.csv", "excursions.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()


def test_sweep_summary(tmp_path):
    cfg = with_(FREE, ["tasks"], {"sweep": {"parameter": "weights[0]", "grid": [0.3, 0.5]}})
    rep = run_scenario(write(tmp_path, cfg), out=tmp_path / "o", cache_root=tmp_path / "c", threads=2)
    summ = rep["tasks"]["sweep"]["summary"]
    assert summ["verdict_constant"]
    rows = list(csv.DictReader(open(tmp_path / "o" / "sweep.csv")))
    assert [r["verdict"] for r in rows] == ["divergent_spectrally_positive_recurrent"] * 2
    assert all(r["status"] == "ok" for r in rows)


def test_main_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, with_(FREE, ["numerics", "seriesOrder"], 300))
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "/numerics/seriesOrder" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["run", str(broken)]) == 2


def test_shipped_scenarios_validate():
    root = Path(__file__).resolve().parents[1] / "scenarios"
    for p in sorted(root.glob("*.json")):
        validate_config(json.loads(p.read_text()))


def test_monitor_task_writes_csv(tmp_path):
    cfg = with_(FREE, ["tasks"], {"monitors": {"rGrid": [0.5, 0.9, 1.1]}})
    rep = run_scenario(write(tmp_path, cfg), out=tmp_path / "o", cache_root=tmp_path / "c")
    assert rep["tasks"]["monitors"]["ok"]
    rows = list(csv.DictReader(open(tmp_path / "o" / "monitors.csv")))
    assert len(rows) == 3 and set(rows[0]) >= {"r", "I2", "J2_1", "J2_2", "I2_over_J2", "bound_ratio"}
