import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from amrtk.cli import main
from amrtk.core import AudioItem, MomentAnnotation, ScoredSpan, Span, read_manifest, write_manifest
from amrtk.embeddings import mock_embed, query_key, write_store
from amrtk.simulate import write_wav_float32

from test_baseline import build_world

SR = 1000


def make_fg_assets(root: Path, n=6):
    audio_dir = root / "fg"
    audio_dir.mkdir(parents=True)
    rows = ["file_name,caption_1,caption_2"]
    for i in range(n):
        t = np.arange(int(2.0 * SR)) / SR
        x = 0.4 * np.sin(2 * np.pi * (30 + 11 * i) * t)
        name = f"clip_{i}.wav"
        write_wav_float32(audio_dir / name, SR, x)
        rows.append(f"{name},a caption about clip {i},another caption {i}")
    captions = root / "captions.csv"
    captions.write_text("\n".join(rows) + "\n")
    return audio_dir, captions


def make_bg_assets(root: Path):
    audio_dir = root / "bg"
    audio_dir.mkdir(parents=True)
    t = np.arange(int(70.0 * SR)) / SR
    write_wav_float32(audio_dir / "walk.wav", SR, 0.1 * np.sin(2 * np.pi * 3 * t))
    return audio_dir


def simulate_args(root: Path, out: Path, n=3, seed=5):
    fg_dir, captions = make_fg_assets(root)
    bg_dir = make_bg_assets(root)
    return [
        "simulate",
        "--fg-audio", str(fg_dir),
        "--fg-captions", str(captions),
        "--bg-audio", str(bg_dir),
        "--out", str(out),
        "--n", str(n),
        "--seed", str(seed),
        "--beta", "10",
        "--sample-rate", str(SR),
    ]


def write_mock_embeddings(items, world, emb_dir: Path):
    for item in items:
        audio, texts = mock_embed(world, item)
        write_store(audio, emb_dir / "audio" / f"{item.audio_id}.emb")
        for query, store in texts.items():
            write_store(store, emb_dir / "text" / f"{query_key(query)}.emb")


class TestSimulateCommand:
    def test_n_zero_valid_empty_manifest(self, tmp_path, capsys):
        rc = main(simulate_args(tmp_path, tmp_path / "out", n=0))
        assert rc == 0
        assert read_manifest(tmp_path / "out" / "manifest.jsonl") == []

    def test_fixed_seed_identical_manifest_sha(self, tmp_path, capsys):
        import hashlib

        shas = []
        for run in ("r1", "r2"):
            root = tmp_path / run
            root.mkdir()
            rc = main(simulate_args(root, root / "out", n=3, seed=11))
            assert rc == 0
            shas.append(hashlib.sha256((root / "out" / "manifest.jsonl").read_bytes()).hexdigest())
        assert shas[0] == shas[1]

    def test_summary_lines(self, tmp_path, capsys):
        rc = main(simulate_args(tmp_path, tmp_path / "out", n=4))
        assert rc == 0
        out = capsys.readouterr().out
        assert "items: 4" in out
        assert "moments:" in out
        assert "mean interval:" in out

    def test_missing_required_flag_is_config_error(self, tmp_path, capsys):
        rc = main(["simulate", "--n", "3"])
        assert rc == 2


class TestBaselineTuneEval:
    @pytest.fixture()
    def pipeline(self, tmp_path):
        world, items = build_world(12, seed=33, sigma=0.0)
        manifest = tmp_path / "manifest.jsonl"
        write_manifest(items, manifest)
        emb_dir = tmp_path / "emb"
        write_mock_embeddings(items, world, emb_dir)
        return tmp_path, manifest, emb_dir

    def test_baseline_eval_roundtrip(self, pipeline, capsys):
        tmp_path, manifest, emb_dir = pipeline
        preds = tmp_path / "preds.jsonl"
        rc = main([
            "baseline", "--manifest", str(manifest), "--emb-dir", str(emb_dir),
            "--tau", "0.5", "--median", "1", "--out", str(preds),
        ])
        assert rc == 0
        report_path = tmp_path / "report.json"
        rc = main([
            "eval", "--preds", str(preds), "--manifest", str(manifest),
            "--out", str(report_path),
        ])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["r1"]["0.50"] == 100.0
        assert report["avg_map"] == 100.0
        assert report["theta_grid"] == [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]

    def test_eval_csv_rows(self, pipeline, tmp_path):
        _, manifest, emb_dir = pipeline
        preds = tmp_path / "p.jsonl"
        main(["baseline", "--manifest", str(manifest), "--emb-dir", str(emb_dir),
              "--tau", "0.5", "--median", "1", "--out", str(preds)])
        csv_path = tmp_path / "per_theta.csv"
        rc = main(["eval", "--preds", str(preds), "--manifest", str(manifest),
                   "--csv", str(csv_path)])
        assert rc == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "theta,r1,map"
        assert len(lines) == 11

    def test_tune_writes_grid_member(self, pipeline, tmp_path, capsys):
        _, manifest, emb_dir = pipeline
        out = tmp_path / "tuned.json"
        rc = main([
            "tune", "--manifest", str(manifest), "--emb-dir", str(emb_dir),
            "--tau-grid", "0.3,0.5,0.7", "--m-grid", "1,3", "--out", str(out),
        ])
        assert rc == 0
        cfg = json.loads(out.read_text())
        assert cfg["threshold"] in (0.3, 0.5, 0.7)
        assert cfg["median_len"] in (1, 3)

    def test_unmatched_prediction_rows_exit_4(self, pipeline, tmp_path, capsys):
        _, manifest, emb_dir = pipeline
        preds = tmp_path / "bad.jsonl"
        preds.write_text(json.dumps({
            "audio_id": "nope", "query": "missing", "candidates": [],
        }) + "\n")
        rc = main(["eval", "--preds", str(preds), "--manifest", str(manifest)])
        assert rc == 4
        assert "unmatched" in capsys.readouterr().err

    def test_missing_file_exit_3(self, tmp_path, capsys):
        rc = main(["eval", "--preds", str(tmp_path / "none.jsonl"),
                   "--manifest", str(tmp_path / "none2.jsonl")])
        assert rc == 3

    def test_config_file_merging_flags_win(self, pipeline, tmp_path):
        _, manifest, emb_dir = pipeline
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"tau": 0.9, "median": 3}))
        preds = tmp_path / "merged.jsonl"
        rc = main([
            "baseline", "--config", str(cfg_file), "--manifest", str(manifest),
            "--emb-dir", str(emb_dir), "--tau", "0.5", "--out", str(preds),
        ])
        assert rc == 0  # tau from flag (0.5), median from file (3)
        rows = [json.loads(l) for l in preds.read_text().splitlines()]
        assert rows and all(r["candidates"] for r in rows)

    def test_unknown_config_key_exit_2(self, pipeline, tmp_path, capsys):
        _, manifest, emb_dir = pipeline
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"no_such_option": 1}))
        rc = main(["baseline", "--config", str(cfg_file), "--manifest", str(manifest),
                   "--emb-dir", str(emb_dir), "--out", str(tmp_path / "x.jsonl")])
        assert rc == 2


class TestSedEval:
    def _manifest_preds(self, tmp_path, shift):
        items = [AudioItem("s-0", "", 60.0, [MomentAnnotation("dog barking", Span(10.0, 20.0))])]
        manifest = tmp_path / "m.jsonl"
        write_manifest(items, manifest)
        preds = tmp_path / "p.jsonl"
        preds.write_text(json.dumps({
            "audio_id": "s-0", "query": "dog barking",
            "candidates": [{"start_s": 10.0 + shift, "end_s": 20.0 + shift, "confidence": 0.8}],
        }) + "\n")
        return manifest, preds

    def test_identity_fixture_100(self, tmp_path, capsys):
        manifest, preds = self._manifest_preds(tmp_path, shift=0.0)
        rc = main(["sed-eval", "--preds", str(preds), "--manifest", str(manifest)])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert (payload["precision"], payload["recall"], payload["f1"]) == (100.0, 100.0, 100.0)

    def test_shifted_fixture_50(self, tmp_path, capsys):
        manifest, preds = self._manifest_preds(tmp_path, shift=5.0)
        rc = main(["sed-eval", "--preds", str(preds), "--manifest", str(manifest)])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert (payload["precision"], payload["recall"], payload["f1"]) == (50.0, 50.0, 50.0)

    def test_threshold_above_confidence_zeroes(self, tmp_path, capsys):
        manifest, preds = self._manifest_preds(tmp_path, shift=0.0)
        rc = main(["sed-eval", "--preds", str(preds), "--manifest", str(manifest),
                   "--threshold", "1.1"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert (payload["precision"], payload["recall"], payload["f1"]) == (0.0, 0.0, 0.0)

    def test_sweep_monotone_positive_count(self, tmp_path, capsys):
        items = [AudioItem("s-0", "", 60.0, [MomentAnnotation("dog barking", Span(10.0, 20.0))])]
        manifest = tmp_path / "m.jsonl"
        write_manifest(items, manifest)
        preds = tmp_path / "p.jsonl"
        preds.write_text(json.dumps({
            "audio_id": "s-0", "query": "dog barking",
            "candidates": [
                {"start_s": 10.0, "end_s": 20.0, "confidence": 0.9},
                {"start_s": 30.0, "end_s": 40.0, "confidence": 0.5},
                {"start_s": 50.0, "end_s": 55.0, "confidence": 0.2},
            ],
        }) + "\n")
        rc = main(["sed-eval", "--preds", str(preds), "--manifest", str(manifest),
                   "--sweep", "0.1,0.4,0.8,1.0"])
        assert rc == 0
        points = json.loads(capsys.readouterr().out)
        positives = [p["tp"] + p["fp"] for p in points]
        assert positives == sorted(positives, reverse=True)


def test_version_prints_format_versions():
    out = subprocess.run(
        [sys.executable, "-m", "amrtk", "--version"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert "manifest format 1" in out.stdout
    assert "embedding store format 1" in out.stdout
