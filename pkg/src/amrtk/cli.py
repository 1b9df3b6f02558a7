"""Command-line interface: simulate / baseline / tune / eval / sed-eval.

A JSON config file (--config) merges under explicit flags: flags beat the
file, the file beats built-in defaults.  Exit codes: 0 ok, 2 config error,
3 I/O error, 4 data-join error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, baseline, metrics
from .core import (
    MANIFEST_FORMAT_VERSION,
    AudioItem,
    ScoredSpan,
    Span,
    read_manifest,
)
from .embeddings import STORE_FORMAT_VERSION, query_key, read_store
from .simulate import (
    SimulationConfig,
    generate_dataset,
    load_background_pool,
    load_foreground_pool,
)

log = logging.getLogger("amrtk")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_JOIN = 4


class ConfigError(Exception):
    pass


class DataJoinError(Exception):
    pass


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults, rejecting unknown config keys."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config {config_path} must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys in {config_path}: {unknown}")
        merged.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require(cfg: dict, keys: list[str]) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"missing required options: {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated float list, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated int list, got {text!r}") from exc


# --- prediction file helpers --------------------------------------------------


def write_predictions(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")


def read_predictions(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for key in ("audio_id", "query", "candidates"):
                if key not in row:
                    raise ValueError(f"{path}:{lineno}: prediction row missing {key!r}")
            rows.append(row)
    return rows


def _candidates_from_row(row: dict) -> list[ScoredSpan]:
    return [
        ScoredSpan(Span(float(c["start_s"]), float(c["end_s"])), float(c["confidence"]))
        for c in row["candidates"]
    ]


def join_predictions(
    items: list[AudioItem], rows: list[dict]
) -> tuple[list[metrics.QueryResult], list[str]]:
    """Join prediction rows with manifest ground truth by (audio_id, query).

    Returns one QueryResult per manifest (audio_id, query) group (missing
    predictions mean an empty candidate list) plus a list of human-readable
    descriptions of prediction rows that did not match anything.
    """
    by_item = {item.audio_id: item for item in items}
    preds: dict[tuple[str, str], list[ScoredSpan]] = {}
    unmatched: list[str] = []
    for row in rows:
        key = (row["audio_id"], row["query"])
        item = by_item.get(row["audio_id"])
        if item is None or not item.spans_for(row["query"]):
            unmatched.append(f"audio_id={row['audio_id']!r} query={row['query']!r}")
            continue
        if key in preds:
            unmatched.append(f"duplicate row audio_id={row['audio_id']!r} query={row['query']!r}")
            continue
        preds[key] = _candidates_from_row(row)
    results = []
    for item in items:
        for query in item.queries():
            results.append(
                metrics.QueryResult(
                    ground_truths=item.spans_for(query),
                    candidates=preds.get((item.audio_id, query), []),
                    duration_s=item.duration_s,
                )
            )
    return results, unmatched


# --- subcommands ---------------------------------------------------------------


SIMULATE_DEFAULTS = {
    "fg_audio": None,
    "fg_captions": None,
    "bg_audio": None,
    "out": None,
    "n": 100,
    "seed": 0,
    "beta": 30.0,
    "sample_rate": 16000,
    "fg_gain_db": [-5.0, 5.0],
    "bg_target_db": -20.0,
    "bg_gain_jitter_db": [-5.0, 5.0],
    "trim_threshold_db": 20.0,
    "trim_frame_ms": 50.0,
    "segment_len": 60.0,
    "segment_hop": 1.0,
    "prefix": "sim-",
}


def run_simulate(args: argparse.Namespace) -> int:
    cfg_map = _merge_config(args, SIMULATE_DEFAULTS)
    _require(cfg_map, ["fg_audio", "fg_captions", "bg_audio", "out"])
    try:
        cfg = SimulationConfig(
            beta_s=float(cfg_map["beta"]),
            fg_gain_db_range=tuple(cfg_map["fg_gain_db"]),
            bg_target_db=float(cfg_map["bg_target_db"]),
            bg_gain_jitter_db=tuple(cfg_map["bg_gain_jitter_db"]),
            trim_threshold_db=float(cfg_map["trim_threshold_db"]),
            trim_frame_ms=float(cfg_map["trim_frame_ms"]),
            segment_len_s=float(cfg_map["segment_len"]),
            segment_hop_s=float(cfg_map["segment_hop"]),
            sample_rate_hz=int(cfg_map["sample_rate"]),
            seed=int(cfg_map["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    fg = load_foreground_pool(cfg_map["fg_audio"], cfg_map["fg_captions"])
    bg = load_background_pool(cfg_map["bg_audio"], cfg)
    items = generate_dataset(fg, bg, int(cfg_map["n"]), cfg, out_dir=cfg_map["out"],
                             prefix=cfg_map["prefix"])
    n_moments = sum(len(it.annotations) for it in items)
    gaps = []
    for it in items:
        t = 0.0
        for ann in it.annotations:
            gaps.append(ann.span.start_s - t)
            t = ann.span.end_s
    mean_gap = float(np.mean(gaps)) if gaps else float("nan")
    print(f"items: {len(items)}")
    print(f"moments: {n_moments}")
    print(f"mean interval: {mean_gap:.2f} s")
    print(f"manifest: {Path(cfg_map['out']) / 'manifest.jsonl'}")
    return EXIT_OK


BASELINE_DEFAULTS = {
    "manifest": None,
    "emb_dir": None,
    "out": None,
    "tau": 0.5,
    "median": 1,
    "window": None,
    "hop": None,
}


def _load_query_store(emb_dir: Path, query: str):
    return read_store(emb_dir / "text" / f"{query_key(query)}.emb")


def run_baseline(args: argparse.Namespace) -> int:
    cfg_map = _merge_config(args, BASELINE_DEFAULTS)
    _require(cfg_map, ["manifest", "emb_dir", "out"])
    items = read_manifest(cfg_map["manifest"])
    emb_dir = Path(cfg_map["emb_dir"])
    rows = []
    for item in items:
        audio_store = read_store(emb_dir / "audio" / f"{item.audio_id}.emb")
        window_s = float(cfg_map["window"]) if cfg_map["window"] is not None else audio_store.window_s
        hop_s = float(cfg_map["hop"]) if cfg_map["hop"] is not None else audio_store.hop_s
        try:
            cfg = baseline.BaselineConfig(
                threshold=float(cfg_map["tau"]),
                median_len=int(cfg_map["median"]),
                window_s=window_s,
                hop_s=hop_s,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for query in item.queries():
            query_store = _load_query_store(emb_dir, query)
            cands = baseline.retrieve(audio_store, query_store, cfg, duration_s=item.duration_s)
            rows.append(
                {
                    "audio_id": item.audio_id,
                    "query": query,
                    "candidates": [
                        {
                            "start_s": c.span.start_s,
                            "end_s": c.span.end_s,
                            "confidence": c.confidence,
                        }
                        for c in cands
                    ],
                }
            )
    write_predictions(rows, cfg_map["out"])
    print(f"wrote {len(rows)} prediction rows to {cfg_map['out']}")
    return EXIT_OK


TUNE_DEFAULTS = {
    "manifest": None,
    "emb_dir": None,
    "out": None,
    "tau_grid": list(baseline.DEFAULT_TAU_GRID),
    "m_grid": list(baseline.DEFAULT_M_GRID),
    "window": None,
    "hop": None,
}


def run_tune(args: argparse.Namespace) -> int:
    cfg_map = _merge_config(args, TUNE_DEFAULTS)
    _require(cfg_map, ["manifest", "emb_dir", "out"])
    items = read_manifest(cfg_map["manifest"])
    emb_dir = Path(cfg_map["emb_dir"])
    tuning_items = []
    window_s = hop_s = None
    for item in items:
        audio_store = read_store(emb_dir / "audio" / f"{item.audio_id}.emb")
        window_s = float(cfg_map["window"]) if cfg_map["window"] is not None else audio_store.window_s
        hop_s = float(cfg_map["hop"]) if cfg_map["hop"] is not None else audio_store.hop_s
        for query in item.queries():
            query_store = _load_query_store(emb_dir, query)
            sims = baseline.similarity_curve(audio_store, query_store)
            tuning_items.append(
                baseline.TuningItem(sims, item.duration_s, item.spans_for(query))
            )
    if not tuning_items:
        raise DataJoinError("validation manifest produced no (audio, query) pairs")
    cfg = baseline.tune(
        tuning_items,
        tau_grid=cfg_map["tau_grid"],
        m_grid=cfg_map["m_grid"],
        window_s=window_s,
        hop_s=hop_s,
    )
    payload = {
        "threshold": cfg.threshold,
        "median_len": cfg.median_len,
        "window_s": cfg.window_s,
        "hop_s": cfg.hop_s,
    }
    with open(cfg_map["out"], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(f"tuned config: tau={cfg.threshold} median={cfg.median_len} -> {cfg_map['out']}")
    return EXIT_OK


EVAL_DEFAULTS = {
    "preds": None,
    "manifest": None,
    "out": None,
    "r1_thetas": [0.5, 0.7],
    "map_thetas": [0.5, 0.75],
    "csv": None,
}


def run_eval(args: argparse.Namespace) -> int:
    cfg_map = _merge_config(args, EVAL_DEFAULTS)
    _require(cfg_map, ["preds", "manifest"])
    items = read_manifest(cfg_map["manifest"])
    rows = read_predictions(cfg_map["preds"])
    results, unmatched = join_predictions(items, rows)
    if unmatched:
        for desc in unmatched:
            print(f"unmatched prediction row: {desc}", file=sys.stderr)
        raise DataJoinError(f"{len(unmatched)} prediction rows did not join the manifest")
    if not results:
        raise DataJoinError("manifest has no annotated queries to evaluate")
    report = metrics.full_report(
        results, r1_thetas=cfg_map["r1_thetas"], map_thetas=cfg_map["map_thetas"]
    )
    payload = report.to_dict()
    payload["n_queries"] = len(results)
    payload["theta_grid"] = list(metrics.IOU_THETA_GRID)
    text = json.dumps(payload, indent=2)
    if cfg_map["out"]:
        Path(cfg_map["out"]).write_text(text + "\n", encoding="utf-8")
    print(text)
    if cfg_map["csv"]:
        with open(cfg_map["csv"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write("theta,r1,map\n")
            for theta in metrics.IOU_THETA_GRID:
                fh.write(
                    f"{theta:.2f},{metrics.recall1_at(results, theta):.4f},"
                    f"{metrics.map_at(results, theta):.4f}\n"
                )
    return EXIT_OK


SED_DEFAULTS = {
    "preds": None,
    "manifest": None,
    "out": None,
    "frame": 1.0,
    "threshold": 0.5,
    "sweep": None,
}


def _sed_point(
    items: list[AudioItem], rows: list[dict], frame_s: float, threshold: float
) -> dict:
    by_item: dict[str, dict[str, list[Span]]] = {}
    for row in rows:
        spans = [c.span for c in _candidates_from_row(row) if c.confidence >= threshold]
        by_item.setdefault(row["audio_id"], {}).setdefault(row["query"], []).extend(spans)
    counts = metrics.SedCounts()
    for item in items:
        gt_by_class: dict[str, list[Span]] = {}
        for ann in item.annotations:
            gt_by_class.setdefault(ann.query, []).append(ann.span)
        pred_by_class = by_item.get(item.audio_id, {})
        counts = counts + metrics.sed_frame_counts(
            pred_by_class, gt_by_class, item.duration_s, frame_s
        )
    m = metrics.sed_metrics_from_counts(counts)
    return {
        "threshold": threshold,
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "tp": counts.tp,
        "fp": counts.fp,
        "fn": counts.fn,
    }


def run_sed_eval(args: argparse.Namespace) -> int:
    cfg_map = _merge_config(args, SED_DEFAULTS)
    _require(cfg_map, ["preds", "manifest"])
    items = read_manifest(cfg_map["manifest"])
    rows = read_predictions(cfg_map["preds"])
    known_ids = {item.audio_id for item in items}
    unmatched = [f"audio_id={r['audio_id']!r}" for r in rows if r["audio_id"] not in known_ids]
    if unmatched:
        for desc in unmatched:
            print(f"unmatched prediction row: {desc}", file=sys.stderr)
        raise DataJoinError(f"{len(unmatched)} prediction rows did not join the manifest")
    frame_s = float(cfg_map["frame"])
    if cfg_map["sweep"]:
        payload: dict | list = [_sed_point(items, rows, frame_s, t) for t in cfg_map["sweep"]]
    else:
        payload = _sed_point(items, rows, frame_s, float(cfg_map["threshold"]))
    text = json.dumps(payload, indent=2)
    if cfg_map["out"]:
        Path(cfg_map["out"]).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# --- parser / entry -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amrtk",
        description="Audio moment retrieval toolkit: simulate data, run the "
        "sliding-window baseline, and evaluate predictions.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"amrtk {__version__} "
            f"(manifest format {MANIFEST_FORMAT_VERSION}, "
            f"embedding store format {STORE_FORMAT_VERSION})"
        ),
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated moment-annotated dataset")
    p.add_argument("--config")
    p.add_argument("--fg-audio", dest="fg_audio", help="directory of foreground WAVs")
    p.add_argument("--fg-captions", dest="fg_captions", help="captions CSV (file_name,caption_*)")
    p.add_argument("--bg-audio", dest="bg_audio", help="directory of background WAVs")
    p.add_argument("--out")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float, help="mean gap between moments, seconds")
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--fg-gain-db", dest="fg_gain_db", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--bg-target-db", dest="bg_target_db", type=float)
    p.add_argument("--bg-gain-jitter-db", dest="bg_gain_jitter_db", type=float, nargs=2,
                   metavar=("LO", "HI"))
    p.add_argument("--trim-threshold-db", dest="trim_threshold_db", type=float)
    p.add_argument("--trim-frame-ms", dest="trim_frame_ms", type=float)
    p.add_argument("--segment-len", dest="segment_len", type=float)
    p.add_argument("--segment-hop", dest="segment_hop", type=float)
    p.add_argument("--prefix")
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("baseline", help="run the sliding-window retriever")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--emb-dir", dest="emb_dir")
    p.add_argument("--out", help="output predictions JSONL")
    p.add_argument("--tau", type=float, help="binarization threshold")
    p.add_argument("--median", type=int, help="median filter length (odd)")
    p.add_argument("--window", type=float, help="override store window length, seconds")
    p.add_argument("--hop", type=float, help="override store hop, seconds")
    p.set_defaults(func=run_baseline)

    p = sub.add_parser("tune", help="grid-search tau and median length on a validation split")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--emb-dir", dest="emb_dir")
    p.add_argument("--out", help="output config JSON")
    p.add_argument("--tau-grid", dest="tau_grid", type=_float_list)
    p.add_argument("--m-grid", dest="m_grid", type=_int_list)
    p.add_argument("--window", type=float)
    p.add_argument("--hop", type=float)
    p.set_defaults(func=run_tune)

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--config")
    p.add_argument("--preds")
    p.add_argument("--manifest")
    p.add_argument("--out", help="output report JSON")
    p.add_argument("--r1-thetas", dest="r1_thetas", type=_float_list)
    p.add_argument("--map-thetas", dest="map_thetas", type=_float_list)
    p.add_argument("--csv", help="optional per-theta CSV")
    p.set_defaults(func=run_eval)

    p = sub.add_parser("sed-eval", help="frame-level micro P/R/F1 against a manifest")
    p.add_argument("--config")
    p.add_argument("--preds")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--frame", type=float, help="frame length, seconds")
    p.add_argument("--threshold", type=float, help="confidence cutoff")
    p.add_argument("--sweep", type=_float_list, help="comma-separated thresholds to sweep")
    p.set_defaults(func=run_sed_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataJoinError as exc:
        print(f"join error: {exc}", file=sys.stderr)
        return EXIT_JOIN
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
