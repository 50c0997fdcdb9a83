import json
from importlib import resources

import pytest

from instancegen.benchmark import load_suite
from instancegen.cli import main

SYNTHETIC_EXCEPT_DIFFUSION = {k: "synthetic" for k in ("detector", "point_segmenter", "chat", "judge", "similarity")}


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_generate_succeeds(tmp_path, capsys):
    code = main(["generate", "--prompt", "two dogs and a cat in a backyard", "--seed", "0",
                 "--out", str(tmp_path / "run")])
    assert code == 0
    assert (tmp_path / "run" / "output.png").is_file()
    assert json.loads(capsys.readouterr().out)["error"] is None


def test_layout_stops_after_summary(tmp_path):
    assert main(["layout", "--prompt", "three apples on a plate", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "segments.json").is_file()
    assert not (tmp_path / "output.png").exists()


@pytest.mark.parametrize("argv", [
    ["generate", "--prompt", "   "],
    ["generate", "--prompt", "a cat", "--config", "/nonexistent/cfg.json"],
])
def test_validation_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_unknown_config_key_exits_2(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"colour": "red"})
    assert main(["generate", "--prompt", "a cat", "--config", cfg, "--out", str(tmp_path / "r")]) == 2


def test_real_set_without_diffusion_exits_3(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"backends": SYNTHETIC_EXCEPT_DIFFUSION})
    code = main(["generate", "--prompt", "a cat", "--backend-set", "real", "--config", cfg,
                 "--out", str(tmp_path / "r")])
    assert code == 3


def test_backend_that_fails_to_start_exits_3(tmp_path, monkeypatch, capsys):
    (tmp_path / "plugins").mkdir()
    (tmp_path / "plugins" / "down.py").write_text(
        "from instancegen.backends.synthetic import SyntheticDetector\n"
        "class Down(SyntheticDetector):\n    def probe(self):\n        return False\n"
        "BACKENDS = {'detector': {'down': Down}}\n")
    monkeypatch.setenv("INSTANCEGEN_BACKEND_DIR", str(tmp_path / "plugins"))
    cfg = write_config(tmp_path / "c.json", {"backends": {"detector": "down"}})
    assert main(["generate", "--prompt", "a cat", "--config", cfg, "--out", str(tmp_path / "r")]) == 3
    assert "detector" in capsys.readouterr().err


def test_bench_run_then_eval(tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "run", "--families", "2", "--tiers", "A", "--bands", "low", "mid",
                 "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.png")) == ["02A-low.png", "02A-mid.png"]
    assert len((out / "runs.jsonl").read_text().splitlines()) == 2
    capsys.readouterr()
    assert main(["bench", "eval", "--results", str(out), "--families", "2", "--tiers", "A",
                 "--bands", "low", "mid"]) == 0
    printed = capsys.readouterr().out
    summary = json.loads(printed[:printed.rindex("}") + 1])
    assert summary["coverage"] == {"total": 2, "scored": 2, "missing_image": 0, "judge_error": 0}
    for name in ("results.csv", "summary.json", "summary_by_tier.png"):
        assert (out / name).is_file()


def test_bench_eval_reports_missing_images(tmp_path, capsys):
    assert main(["bench", "eval", "--results", str(tmp_path), "--families", "5", "--no-similarity"]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["coverage"]["missing_image"] == 9 and summary["vqa_acc"] is None


def test_build_suite_reproduces_shipped_file(tmp_path):
    assert main(["bench", "build-suite", "--out", str(tmp_path / "s.jsonl")]) == 0
    assert (tmp_path / "s.jsonl").read_bytes() == resources.files("instancegen").joinpath("data", "compound_prompts.jsonl").read_bytes()
    assert load_suite(tmp_path / "s.jsonl") == load_suite()


def test_bad_suite_file_exits_2(tmp_path):
    bad = tmp_path / "s.jsonl"
    bad.write_text('{"family_id": 1}\n')
    assert main(["bench", "eval", "--results", str(tmp_path), "--suite", str(bad)]) == 2
