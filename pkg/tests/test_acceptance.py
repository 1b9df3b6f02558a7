"""Acceptance suite: one test per release criterion, stated tolerances pinned.

Run with ``pytest -s tests/test_acceptance.py`` to see one pass line per
criterion; any failure is a plain pytest failure.
"""

import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from amrtk import baseline as bl
from amrtk import metrics
from amrtk.core import (
    AudioItem,
    Candidate,
    MomentAnnotation,
    NormalizedMoment,
    ScoredSpan,
    Span,
    read_manifest,
    write_manifest,
)
from amrtk.embeddings import (
    EmbeddingStore,
    StoreFormatError,
    mock_embed,
    read_store,
    write_store,
)
from amrtk.losses import (
    Assignment,
    LossWeights,
    PredictionSet,
    moment_loss,
    moment_loss_gradient,
    optimal_assignment,
    overall_loss,
    score_loss,
)
from amrtk.simulate import (
    ForegroundClip,
    ForegroundPool,
    SimulationConfig,
    apply_gain_to_power,
    generate_dataset,
    generate_sample_with_details,
    item_seed,
    rms,
    sample_interval,
    segment_background,
)

from test_baseline import build_world
from test_losses import brute_force_assignment, fd_gradient, random_instance, random_nonkink_pair

SR = 1000


def _report(name: str) -> None:
    print(f"[ACCEPTANCE] {name}: PASS", file=sys.stderr)


def test_matching_oracle_exact_over_1000_instances():
    """1,000 random instances, K in 2..7, N in 1..K: Eq-style matching cost
    equals exhaustive search exactly (0 tolerance), in under 10 s."""
    rng = np.random.default_rng(20240901)
    w = LossWeights(10.0, 1.0, 4.0)
    t0 = time.perf_counter()
    for _ in range(1000):
        preds, gts = random_instance(rng)
        a = optimal_assignment(preds, gts, w)
        ks = [k for k, _ in sorted(a.pairs, key=lambda p: p[1])]
        total = 0.0
        for n, k in enumerate(ks):
            cand = preds.candidates[k]
            total += -cand.confidence + moment_loss(cand.moment, gts[n], w)
        _, oracle_total = brute_force_assignment(preds, gts, w)
        assert total == oracle_total, f"cost mismatch: {total} vs {oracle_total}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"matching acceptance took {elapsed:.1f} s"
    _report(f"matching oracle (1000 instances, exact, {elapsed:.2f} s)")


def test_gradient_check_1000_nonkink_pairs():
    """Analytic gradients vs central differences (h=1e-6) on 1,000 random
    non-kink pairs: max relative error < 1e-4, in under 5 s."""
    rng = np.random.default_rng(77001)
    w = LossWeights(10.0, 1.0, 4.0)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        pred, gt = random_nonkink_pair(rng)
        g = moment_loss_gradient(pred, gt, w)
        assert not g.near_kink
        fd_c, fd_w = fd_gradient(pred, gt, w, h=1e-6)
        scale = max(abs(fd_c), abs(fd_w), 1.0)
        worst = max(worst, abs(g.d_center - fd_c) / scale, abs(g.d_width - fd_w) / scale)
    elapsed = time.perf_counter() - t0
    assert worst < 1e-4, f"max relative gradient error {worst:.2e}"
    assert elapsed < 5.0, f"gradient acceptance took {elapsed:.1f} s"
    _report(f"gradient check (1000 pairs, max rel err {worst:.2e}, {elapsed:.2f} s)")


def test_loss_fixture_golden_values():
    """Hand/oracle-derived golden values for the per-pair, score and overall
    losses match to 1e-9."""
    # L1 in start/end form: (0.1,0.5) vs (0.2,0.4) -> 0.2; (0.0,0.2) vs (0.3,0.5) -> 0.3
    from amrtk.losses import giou_loss, l1_loss

    assert l1_loss(NormalizedMoment(0.3, 0.4), NormalizedMoment(0.3, 0.2)) == pytest.approx(
        0.2, abs=1e-9
    )
    assert l1_loss(NormalizedMoment(0.1, 0.2), NormalizedMoment(0.4, 0.2)) == pytest.approx(
        0.3, abs=1e-9
    )
    assert giou_loss(NormalizedMoment(0.1, 0.2), NormalizedMoment(0.5, 0.2)) == pytest.approx(
        1.0 / 3.0, abs=1e-9
    )
    assert score_loss([0.8, 0.3], Assignment(((0, 0),))) == pytest.approx(
        0.5798184952529422, abs=1e-9
    )
    with open(Path(__file__).parent / "data" / "loss_fixtures.json", encoding="utf-8") as fh:
        fixtures = json.load(fh)
    for case in fixtures["cases"]:
        w = LossWeights(*case["weights"])
        preds = PredictionSet(
            tuple(Candidate(NormalizedMoment(c, wd), cf) for c, wd, cf in case["preds"])
        )
        gts = [NormalizedMoment(c, wd) for c, wd in case["gts"]]
        total, a = overall_loss(preds, gts, w)
        assert total == pytest.approx(case["expected_loss"], abs=1e-9), case["name"]
        assert [list(p) for p in a.pairs] == case["expected_assignment"], case["name"]
    _report("loss fixtures (1e-9)")


def test_metric_protocol_grid_and_fixtures():
    """Theta grid is exactly {0.50..0.95} step 0.05 (10 values); the
    0.706-IoU one-candidate case yields avg mAP 50.0 exactly."""
    assert metrics.IOU_THETA_GRID == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    result = metrics.QueryResult(
        ground_truths=[Span(16.0, 44.0)],
        candidates=[ScoredSpan(Span(20.0, 50.0), 0.8)],
        duration_s=60.0,
    )
    assert metrics.recall1_at([result], 0.5) == 100.0
    assert metrics.recall1_at([result], 0.75) == 0.0
    assert metrics.map_at([result], 0.5) == 100.0
    assert metrics.map_at([result], 0.75) == 0.0
    assert metrics.avg_map([result]) == 50.0
    # ranked [miss, hit] AP fixture
    ranked = metrics.QueryResult(
        ground_truths=[Span(10.0, 20.0)],
        candidates=[ScoredSpan(Span(40.0, 50.0), 0.9), ScoredSpan(Span(10.0, 20.0), 0.5)],
    )
    assert metrics.average_precision(ranked, 0.5) == 0.5
    _report("metric protocol (grid + fixtures exact)")


def test_simulator_statistics():
    """10,000 interval draws at beta=30 s land in [29.1, 30.9]; 1,000 items
    have zero overlapping and zero out-of-bounds annotations; same-seed
    regeneration is byte-identical."""
    rng = np.random.default_rng(424242)
    draws = np.array([sample_interval(rng, 30.0) for _ in range(10_000)])
    assert 29.1 <= draws.mean() <= 30.9, f"draw mean {draws.mean():.3f}"

    def tone(duration_s, freq, amp=0.4):
        t = np.arange(round(duration_s * SR)) / SR
        return amp * np.sin(2 * np.pi * freq * t)

    fg = ForegroundPool(
        [ForegroundClip(tone(1.5 + 0.2 * i, 40 + 9 * i), [f"clip {i}"]) for i in range(20)]
    )
    cfg = SimulationConfig(beta_s=5.0, sample_rate_hz=SR, seed=99)
    bg = segment_background(tone(65.0, 3.0, amp=0.15), cfg)
    items = generate_dataset(fg, bg, 1000, cfg)
    n_moments = 0
    for item in items:
        anns = item.annotations
        n_moments += len(anns)
        for a, b in zip(anns, anns[1:]):
            assert a.span.end_s <= b.span.start_s, f"overlap in {item.audio_id}"
        for a in anns:
            assert 0.0 <= a.span.start_s and a.span.end_s <= item.duration_s + 1e-12
    assert n_moments > 0

    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        digests = []
        for run in ("a", "b"):
            out = tmp / run
            generate_dataset(fg, bg, 5, cfg, out_dir=out)
            digest = hashlib.sha256()
            for path in sorted(out.rglob("*")):
                if path.is_file():
                    digest.update(path.name.encode())
                    digest.update(path.read_bytes())
            digests.append(digest.hexdigest())
        assert digests[0] == digests[1]
    _report(
        f"simulator statistics (mean gap {draws.mean():.2f} s, "
        f"{n_moments} moments over 1000 items, byte-identical rerun)"
    )


def test_gain_calibration_100_items():
    """Measured RMS of (mix - background) inside every annotated span matches
    the drawn foreground gain within 0.1 dB across 100 items."""

    def tone(duration_s, freq, amp=0.4):
        t = np.arange(round(duration_s * SR)) / SR
        return amp * np.sin(2 * np.pi * freq * t)

    fg = ForegroundPool(
        [ForegroundClip(tone(2.0 + 0.3 * i, 35 + 11 * i), [f"clip {i}"]) for i in range(12)]
    )
    cfg = SimulationConfig(beta_s=8.0, sample_rate_hz=SR, seed=314)
    bg_pool = segment_background(tone(64.0, 2.5, amp=0.2), cfg)
    checked = 0
    worst_db = 0.0
    for i in range(100):
        rng = np.random.default_rng(item_seed(cfg.seed, i))
        bg_audio = bg_pool.load(int(rng.integers(len(bg_pool))))
        mix, anns, details = generate_sample_with_details(bg_audio, fg, cfg, rng)
        bg_scaled = apply_gain_to_power(bg_audio, details.bg_gain_db)
        for p in details.placements:
            recovered = mix[p.start_sample : p.end_sample] - bg_scaled[p.start_sample : p.end_sample]
            err_db = abs(20 * math.log10(rms(recovered)) - p.gain_db)
            worst_db = max(worst_db, err_db)
            assert err_db < 0.1, f"gain error {err_db:.4f} dB"
            checked += 1
    assert checked > 50
    _report(f"gain calibration ({checked} spans, worst error {worst_db:.2e} dB)")


def _world_results(world, items, cfg):
    results = []
    for item in items:
        audio, texts = mock_embed(world, item)
        for query in item.queries():
            cands = bl.retrieve(audio, texts[query], cfg, duration_s=item.duration_s)
            results.append(metrics.QueryResult(item.spans_for(query), cands, item.duration_s))
    return results


def _tuning_items(world, items):
    tuning = []
    for item in items:
        audio, texts = mock_embed(world, item)
        for query in item.queries():
            sims = bl.similarity_curve(audio, texts[query])
            tuning.append(bl.TuningItem(sims, item.duration_s, item.spans_for(query)))
    return tuning

def test_closed_loop_retrieval():
    """Sigma-0 mock world (D=128, events >= 10 s, w=1 s, hop=1 s, tuned tau):
    R1@0.5 = 100% and avg mAP >= 90 over 200 items; with sigma=0.3 noise,
    tuning weakly improves avg mAP over the (tau=0.5, m=1) default.
    Total runtime < 2 min."""
    t0 = time.perf_counter()

    # clean world: tune tau at m=1, expect essentially perfect recovery
    world0, items0 = build_world(200, seed=1001, sigma=0.0)
    tuned0 = bl.tune(_tuning_items(world0, items0), m_grid=[1])
    results0 = _world_results(world0, items0, tuned0)
    r1 = metrics.recall1_at(results0, 0.5)
    amap0 = metrics.avg_map(results0)
    assert r1 == 100.0, f"R1@0.5 = {r1}"
    assert amap0 >= 90.0, f"avg mAP = {amap0}"

    # noisy world: grid-tuned config must not lose to the untuned default
    world1, items1 = build_world(200, seed=1002, sigma=0.3)
    tuning1 = _tuning_items(world1, items1)
    default_cfg = bl.BaselineConfig(threshold=0.5, median_len=1)
    results_default = _world_results(world1, items1, default_cfg)
    amap_default = metrics.avg_map(results_default)
    tuned1 = bl.tune(tuning1, m_grid=[1, 3, 5, 7])
    results_tuned = _world_results(world1, items1, tuned1)
    amap_tuned = metrics.avg_map(results_tuned)
    assert amap_tuned >= amap_default, f"tuned {amap_tuned} < default {amap_default}"

    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"closed-loop acceptance took {elapsed:.0f} s"
    _report(
        f"closed-loop retrieval (R1@0.5 {r1:.0f}%, avg mAP {amap0:.1f}; "
        f"noisy tuned {amap_tuned:.1f} vs default {amap_default:.1f}; {elapsed:.0f} s)"
    )


def test_sed_rasterization_fixture():
    """(10,20) GT vs (15,25) prediction on 60 s: micro P=R=F1=50.00 exactly;
    identical predictions give 100."""
    gt = {"class a": [Span(10.0, 20.0)]}
    pred = {"class a": [Span(15.0, 25.0)]}
    m = metrics.sed_frame_metrics(pred, gt, 60.0, frame_s=1.0)
    assert (m.precision, m.recall, m.f1) == (50.0, 50.0, 50.0)
    m_id = metrics.sed_frame_metrics(gt, gt, 60.0, frame_s=1.0)
    assert (m_id.precision, m_id.recall, m_id.f1) == (100.0, 100.0, 100.0)
    _report("SED rasterization fixture (50.00 / 100.00 exact)")


def test_format_round_trips_and_truncation(tmp_path):
    """Manifest JSONL and embedding stores round-trip bit-exactly; payload
    truncation is detected."""
    items = [
        AudioItem(
            "fmt-0",
            "audio/fmt-0.wav",
            60.0,
            [MomentAnnotation("water dripping in a cave", Span(3.125, 17.25))],
        )
    ]
    manifest = tmp_path / "m.jsonl"
    write_manifest(items, manifest)
    first = manifest.read_bytes()
    write_manifest(read_manifest(manifest), manifest)
    assert manifest.read_bytes() == first

    rng = np.random.default_rng(8)
    store = EmbeddingStore(
        dim=32, rows=rng.normal(size=(11, 32)).astype(np.float32), window_s=1.0
    )
    payload = write_store(store, tmp_path / "s.emb")
    loaded = read_store(tmp_path / "s.emb")
    assert loaded == store
    write_store(loaded, tmp_path / "s2.emb")
    assert (tmp_path / "s.emb").read_bytes() == (tmp_path / "s2.emb").read_bytes()

    payload.write_bytes(payload.read_bytes()[:-8])
    with pytest.raises(StoreFormatError, match=r"expected rows\*dim\*4"):
        read_store(tmp_path / "s.emb")
    _report("format round-trips (manifest + store bit-exact, truncation detected)")
