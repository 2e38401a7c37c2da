"""Acceptance suite: one test per acceptance criterion, each printing a
pass/fail line (run with ``pytest tests/test_acceptance.py -v -s``).

Expected values are produced by independent oracles implemented here and
in ``oracles.py``: straight-line reward equations, all-pairs geometry
scans, and finite differences.  The library code under test is never used
to generate its own expected values.
"""

from __future__ import annotations

import json
import random
import socket
import threading
import time
import zlib

import numpy as np
import pytest

from groundrl.dataset import convert_mask, filter_pool, QualityEntry
from groundrl.geometry import (
    BBox,
    MaskGrid,
    PointXY,
    box_iou,
    distance_transform,
    inscribed_center,
    mask_to_bbox,
    outer_ring_point,
    point_in_box,
)
from groundrl.grpo import (
    GroupLogProbs,
    GrpoConfig,
    grpo_demo_train,
    grpo_gradient_check,
    grpo_objective,
    group_advantages,
    two_action_policy,
)
from groundrl.metrics import EvalPair, box_ciou, box_giou, evaluate
from groundrl.parsing import GroundingAnswer, parse_rollout, render_completion
from groundrl.rewards import (
    GroundTruth,
    reward_bbox_distance,
    reward_bbox_iou,
    reward_points,
    score_completion,
)
from groundrl.service import RewardServer, handle_request_line, score_batch_file

from .oracles import (
    brute_bbox,
    brute_distance_field,
    brute_inscribed,
    brute_outer_ring,
    random_mask,
)


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}" + (f": {detail}" if detail else ""))


# --------------------------------------------------------------------------
# independent straight-line re-implementation of the reward equations
# --------------------------------------------------------------------------

def oracle_localization_rewards(pred_box, pred_p1, pred_p2, gt_box, gt_p1, gt_p2):
    x1g, y1g, x2g, y2g = gt_box
    wg, hg = x2g - x1g, y2g - y1g
    smin, smax = min(wg, hg), max(wg, hg)
    x1p, y1p, x2p, y2p = pred_box

    iw = min(x2p, x2g) - max(x1p, x1g)
    ih = min(y2p, y2g) - max(y1p, y1g)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = (x2p - x1p) * (y2p - y1p) + wg * hg - inter
    iou = inter / union
    r_iou = 1.0 if iou > 0.5 else 0.0

    cxp, cyp = (x1p + x2p) / 2.0, (y1p + y2p) / 2.0
    cxg, cyg = (x1g + x2g) / 2.0, (y1g + y2g) / 2.0
    d_bbox = 0.5 * (abs(cxp - cxg) / wg + abs(cyp - cyg) / hg)
    r_dist = max(0.0, 1.0 - d_bbox / 0.5)

    d1 = (abs(pred_p1[0] - gt_p1[0]) + abs(pred_p1[1] - gt_p1[1])) / smin
    d2 = (abs(pred_p2[0] - gt_p2[0]) + abs(pred_p2[1] - gt_p2[1])) / smax
    s = (d1 + d2) / 2.0
    in_1 = x1g <= pred_p1[0] <= x2g and y1g <= pred_p1[1] <= y2g
    in_2 = x1g <= pred_p2[0] <= x2g and y1g <= pred_p2[1] <= y2g
    r_pts = 1.0 if (in_1 and in_2 and s < 0.5) else 0.0
    return r_iou, r_dist, r_pts


def _random_instance(rng: np.random.Generator):
    """A random (pred, gt) pair inside a 100x100 image."""

    def box():
        x1 = rng.uniform(0, 60)
        y1 = rng.uniform(0, 60)
        return (x1, y1, x1 + rng.uniform(0.5, 39), y1 + rng.uniform(0.5, 39))

    def point():
        return (rng.uniform(0, 100), rng.uniform(0, 100))

    return box(), point(), point(), box(), point(), point()


def test_reward_correctness():
    start = time.monotonic()

    gt = GroundTruth(BBox(0, 0, 10, 10), PointXY(5, 5), PointXY(2, 2), 20, 20)
    gt_tall = GroundTruth(BBox(0, 0, 10, 20), PointXY(5, 10), PointXY(5, 5), 30, 30)
    perfect = render_completion("t", GroundingAnswer(gt.bbox, gt.point_1, gt.point_2))
    shifted = render_completion(
        "t", GroundingAnswer(BBox(5, 0, 15, 10), gt.point_1, gt.point_2)
    )

    # hand-derived reward table
    table = [
        (reward_bbox_iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)), 1.0),
        (reward_bbox_iou(BBox(5, 0, 15, 10), BBox(0, 0, 10, 10)), 0.0),  # IoU 1/3
        (reward_bbox_distance(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)), 1.0),
        (reward_bbox_distance(BBox(2, 0, 12, 10), BBox(0, 0, 10, 10)), 0.8),
        (reward_bbox_distance(BBox(10, 10, 20, 20), BBox(0, 0, 10, 10)), 0.0),
        (reward_points(PointXY(5, 5), PointXY(2, 2), gt), 1.0),
        (reward_points(PointXY(7, 13), PointXY(9, 9), gt_tall), 1.0),  # S = 0.45
        (reward_points(PointXY(11, 5), PointXY(2, 2), gt), 0.0),  # outside box
        (score_completion(perfect, gt).total, 5.0),
        (score_completion("unparseable garbage", gt).total, 0.0),
        (score_completion(shifted, gt).total, 3.5),
    ]
    for got, want in table:
        assert got == want, f"reward table: got {got!r}, want {want!r}"

    # randomized agreement with the straight-line oracle
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        pb, pp1, pp2, gb, gp1, gp2 = _random_instance(rng)
        want = oracle_localization_rewards(pb, pp1, pp2, gb, gp1, gp2)
        gt_i = GroundTruth(BBox(*gb), PointXY(*gp1), PointXY(*gp2), 100, 100)
        got = (
            reward_bbox_iou(BBox(*pb), gt_i.bbox),
            reward_bbox_distance(BBox(*pb), gt_i.bbox),
            reward_points(PointXY(*pp1), PointXY(*pp2), gt_i),
        )
        for g, w in zip(got, want):
            worst = max(worst, abs(g - w))
        completion = render_completion(
            "r", GroundingAnswer(BBox(*pb), PointXY(*pp1), PointXY(*pp2))
        )
        breakdown = score_completion(completion, gt_i)
        assert breakdown.reasoning_format == 1.0 and breakdown.prompt_format == 1.0
        worst = max(worst, abs(breakdown.total - (2.0 + sum(want))))
    assert worst <= 1e-12, f"reward mismatch vs straight-line oracle: {worst}"

    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"reward correctness took {elapsed:.2f}s (limit 5s)"
    report("reward-correctness", True,
           f"table exact, 1000 randomized instances, max |diff| {worst:.2e}, {elapsed:.2f}s")


def test_threshold_semantics():
    # IoU exactly 0.5: inter 50, union 100
    assert box_iou(BBox(0, 0, 10, 5), BBox(0, 0, 10, 10)) == 0.5
    assert reward_bbox_iou(BBox(0, 0, 10, 5), BBox(0, 0, 10, 10)) == 0.0

    # d_bbox exactly 0.5: centers offset by exactly w_g
    pred = BBox(10, 0, 20, 10)
    gt_box = BBox(0, 0, 10, 10)
    d = 0.5 * (abs(15.0 - 5.0) / 10.0 + 0.0)
    assert d == 0.5
    assert reward_bbox_distance(pred, gt_box) == 0.0

    # S exactly 0.5: s_min = s_max = 10, both L1 offsets exactly 5
    gt = GroundTruth(gt_box, PointXY(5, 5), PointXY(2, 2), 20, 20)
    s = ((5.0 / 10.0) + (5.0 / 10.0)) / 2.0
    assert s == 0.5
    assert reward_points(PointXY(10, 5), PointXY(7, 2), gt) == 0.0

    # a hair across each boundary flips the reward
    assert reward_bbox_iou(BBox(0, 0, 10, 5.000001), BBox(0, 0, 10, 10)) == 1.0
    assert reward_bbox_iou(BBox(0, 0, 10, 4.999999), BBox(0, 0, 10, 10)) == 0.0
    assert reward_bbox_distance(BBox(9.99, 0, 19.99, 10), gt_box) > 0.0
    assert reward_points(PointXY(9.99, 5), PointXY(7, 2), gt) == 1.0
    report("threshold-semantics", True, "IoU=0.5, S=0.5, d_bbox=0.5 all resolve to 0")


def test_grpo_math():
    start = time.monotonic()

    rng = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        g = int(rng.integers(2, 24))
        rewards = rng.uniform(0, 5, g)
        if rewards.std() <= 1e-6:
            continue
        adv = group_advantages(rewards)
        assert abs(adv.mean()) < 1e-9
        assert abs(adv.std() - 1.0) < 1e-9
        checked += 1

    # identity case is exactly zero
    lp = GroupLogProbs([-0.7, -1.1], [-0.7, -1.1], [-0.7, -1.1])
    assert grpo_objective(lp, [1.0, -1.0]) == 0.0

    scene = GroundTruth(BBox(20, 30, 70, 80), PointXY(45, 55), PointXY(30, 40), 100, 100)
    max_err = 0.0
    for trial in range(100):
        policy = two_action_policy(scene).with_logits(rng.uniform(-2.5, 2.5, 2))
        cfg = GrpoConfig(
            epsilon=float(rng.uniform(0.1, 0.3)), beta=float(rng.uniform(0.0, 0.05))
        )
        err = grpo_gradient_check(policy, scene, cfg, seed=trial,
                                  group_size=int(rng.integers(2, 12)))
        max_err = max(max_err, err)
    assert max_err < 1e-4, f"gradient check failed: max rel err {max_err}"

    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"grpo math took {elapsed:.2f}s (limit 30s)"
    report("grpo-math", True,
           f"1000 standardized groups, identity exact 0, fd max rel err {max_err:.2e}, "
           f"{elapsed:.2f}s")


def test_grpo_demo_learning():
    start = time.monotonic()
    scene = GroundTruth(BBox(20, 30, 70, 80), PointXY(45, 55), PointXY(30, 40), 100, 100)
    wins = 0
    for seed in range(100):
        result = grpo_demo_train(scene, steps=200, lr=0.1, seed=seed)
        if result.final_p_best > 0.9:
            wins += 1
    elapsed = time.monotonic() - start
    assert wins >= 95, f"only {wins}/100 seeds exceeded p_best 0.9"
    assert elapsed < 60.0, f"demo learning took {elapsed:.2f}s (limit 60s)"
    report("grpo-demo-learning", True, f"{wins}/100 seeds above 0.9, {elapsed:.2f}s")


def test_geometry_oracles():
    start = time.monotonic()
    rng = np.random.default_rng(99)
    for trial in range(10_000):
        cells = random_mask(rng, max_side=16)
        mask = MaskGrid(cells)

        want_field = brute_distance_field(cells)
        got_field = distance_transform(mask).values
        assert np.allclose(got_field, want_field, atol=1e-9), f"trial {trial}: field"

        assert mask_to_bbox(mask).as_tuple() == brute_bbox(cells), f"trial {trial}: bbox"

        center, radius = inscribed_center(mask)
        want_center, want_radius = brute_inscribed(cells)
        assert (center.x, center.y) == want_center, f"trial {trial}: center"
        assert abs(radius - want_radius) < 1e-9, f"trial {trial}: radius"

        p2 = outer_ring_point(mask, center, radius)
        want_p2 = brute_outer_ring(cells, (center.x, center.y), radius)
        assert (p2.x, p2.y) == want_p2, f"trial {trial}: outer ring"

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"geometry oracles took {elapsed:.2f}s (limit 60s)"
    report("geometry-oracles", True, f"10000 masks up to 16x16, {elapsed:.2f}s")


def test_conversion_invariants():
    start = time.monotonic()
    rng = np.random.default_rng(123)
    violations = 0
    for _ in range(10_000):
        cells = random_mask(rng, max_side=32)
        mask = MaskGrid(cells)
        bbox, p1, p2 = convert_mask(mask)
        for p in (p1, p2):
            r, c = int(p.y - 0.5), int(p.x - 0.5)
            if not cells[r, c] or not point_in_box(p, bbox):
                violations += 1
        if bbox != mask_to_bbox(mask):
            violations += 1
    elapsed = time.monotonic() - start
    assert violations == 0, f"{violations} conversion invariant violations"
    report("conversion-invariants", True, f"10000 masks, 0 violations, {elapsed:.2f}s")


def _random_eval_box(rng: np.random.Generator) -> BBox:
    x1 = rng.uniform(0, 80)
    y1 = rng.uniform(0, 80)
    return BBox(x1, y1, x1 + rng.uniform(0.5, 60), y1 + rng.uniform(0.5, 60))


def test_metrics_worked_examples():
    giou = box_giou(BBox(0, 0, 1, 1), BBox(2, 0, 3, 1))
    assert abs(giou - (-1.0 / 3.0)) <= 1e-12, f"GIoU worked example: {giou}"
    ciou = box_ciou(BBox(0, 0, 2, 2), BBox(2, 0, 4, 2))
    assert abs(ciou - (-0.2)) <= 1e-12, f"CIoU worked example: {ciou}"
    report("metrics-worked-examples", True, "GIoU -1/3 and CIoU -0.2 to 1e-12")


def test_metrics_box_ordering_chain():
    """CIoU <= GIoU <= IoU on 10,000 random box pairs.

    The GIoU <= IoU half is a theorem and holds.  The CIoU <= GIoU half is
    not: for same-shape boxes displaced diagonally the CIoU penalty is
    exactly half the GIoU slack (e.g. unit squares at (0,0) and (2,2) give
    GIoU -7/9 but CIoU -4/9), so random pairs violate the chain.  The test
    states the criterion faithfully and is expected to fail; see the
    per-pair diagnostics in the assertion message.
    """
    rng = np.random.default_rng(31337)
    ciou_violations = 0
    giou_violations = 0
    first_example = None
    for _ in range(10_000):
        a, b = _random_eval_box(rng), _random_eval_box(rng)
        iou = box_iou(a, b)
        giou = box_giou(a, b)
        ciou = box_ciou(a, b)
        if giou > iou + 1e-12:
            giou_violations += 1
        if ciou > giou + 1e-12:
            ciou_violations += 1
            if first_example is None:
                first_example = (a.as_tuple(), b.as_tuple(), iou, giou, ciou)
    ok = ciou_violations == 0 and giou_violations == 0
    report(
        "metrics-ordering-chain",
        ok,
        f"GIoU<=IoU violations: {giou_violations}, CIoU<=GIoU violations: "
        f"{ciou_violations} of 10000",
    )
    assert ok, (
        f"CIoU <= GIoU fails on {ciou_violations}/10000 random pairs "
        f"(GIoU <= IoU holds: {giou_violations} violations); first example: "
        f"{first_example}"
    )


def test_metrics_report_byte_identical():
    rng = np.random.default_rng(55)
    gt_masks = [random_mask(rng, max_side=24) for _ in range(12)]
    methods = {"method_a": 0.15, "method_b": 0.4, "method_c": 0.75}

    def build_report() -> bytes:
        lines = []
        for name, flip_rate in sorted(methods.items()):
            flip_rng = np.random.default_rng(zlib.crc32(name.encode()))
            pairs = []
            for i, gt in enumerate(gt_masks):
                pred = gt ^ (flip_rng.random(gt.shape) < flip_rate)
                pairs.append(EvalPair(f"{name}/{i}", MaskGrid(pred), MaskGrid(gt)))
            rep = evaluate(pairs, metric_set="paper")
            lines.append(json.dumps({"model": name, **rep.summary_dict()},
                                    sort_keys=True, separators=(",", ":")))
        return ("\n".join(lines) + "\n").encode()

    first = build_report()
    second = build_report()
    assert first == second
    rows = [json.loads(line) for line in first.decode().splitlines()]
    assert [r["model"] for r in rows] == ["method_a", "method_b", "method_c"]
    assert all(set(r) >= {"miou", "giou", "ciou", "n_samples"} for r in rows)
    # more corruption, worse score: the table orders as a real comparison would
    assert rows[0]["miou"] > rows[1]["miou"] > rows[2]["miou"]
    report("metrics-report-determinism", True,
           "3-method x {mIoU,gIoU,cIoU} table byte-identical across runs")


def test_filter_semantics():
    rng = np.random.default_rng(8)
    for _ in range(500):
        n = int(rng.integers(0, 40))
        scores = []
        for _ in range(n):
            roll = rng.random()
            if roll < 0.15:
                scores.append(50.0)  # exact boundary
            elif roll < 0.3:
                scores.append(float(np.nextafter(50.0, 0.0)))
            else:
                scores.append(float(rng.uniform(-10, 110)))
        entries = [QualityEntry(f"i{i}", s) for i, s in enumerate(scores)]
        kept, discarded = filter_pool(entries, threshold=50.0)
        assert kept == [e for e in entries if e.quality_score < 50.0]
        assert discarded == [e for e in entries if e.quality_score >= 50.0]
        assert len(kept) + len(discarded) == n
    report("filter-semantics", True, "strict-less-than partition on fuzzed lists")


def test_parser_robustness():
    start = time.monotonic()
    rng = random.Random(1)
    fragments = [
        "<think>", "</think>", "<answer>", "</answer>", "{", "}", "[", "]",
        '"bbox"', '"points_1"', '"points_2"', ":", ",", "1", "-3.5", "NaN",
        "null", "true", " ", "\n", "x",
    ]
    for trial in range(100_000):
        if trial % 2 == 0:
            n = rng.randrange(0, 64)
            s = bytes(rng.randrange(256) for _ in range(n)).decode("latin-1")
        else:
            s = "".join(rng.choice(fragments) for _ in range(rng.randrange(0, 24)))
        out = parse_rollout(s, 100, 100)  # must never raise
        assert not (out.prompt_format_ok and not out.reasoning_format_ok)

    rng_np = np.random.default_rng(17)
    for _ in range(10_000):
        x1 = rng_np.uniform(0, 50)
        y1 = rng_np.uniform(0, 50)
        answer = GroundingAnswer(
            BBox(x1, y1, x1 + rng_np.uniform(0.001, 49), y1 + rng_np.uniform(0.001, 49)),
            PointXY(rng_np.uniform(0, 100), rng_np.uniform(0, 100)),
            PointXY(rng_np.uniform(0, 100), rng_np.uniform(0, 100)),
        )
        parsed = parse_rollout(render_completion("t", answer), 100, 100)
        assert parsed.prompt_format_ok and parsed.answer == answer

    elapsed = time.monotonic() - start
    report("parser-robustness", True,
           f"100000 fuzzed inputs, 10000 exact round-trips, {elapsed:.2f}s")


# --------------------------------------------------------------------------
# service conformance
# --------------------------------------------------------------------------

def build_golden_corpus(n: int = 500) -> list[str]:
    rng = np.random.default_rng(4242)
    gt = {
        "bbox": [10, 10, 60, 50],
        "point_1": [30, 30],
        "point_2": [20, 40],
        "image_width": 100,
        "image_height": 100,
    }
    perfect = render_completion(
        "t", GroundingAnswer(BBox(10, 10, 60, 50), PointXY(30, 30), PointXY(20, 40))
    )

    def random_completion() -> str:
        roll = rng.random()
        if roll < 0.3:
            return perfect
        if roll < 0.5:
            return "free-form nonsense " + str(int(rng.integers(1000)))
        x1 = float(rng.uniform(0, 50))
        y1 = float(rng.uniform(0, 50))
        answer = GroundingAnswer(
            BBox(x1, y1, x1 + float(rng.uniform(1, 45)), y1 + float(rng.uniform(1, 45))),
            PointXY(float(rng.uniform(0, 100)), float(rng.uniform(0, 100))),
            PointXY(float(rng.uniform(0, 100)), float(rng.uniform(0, 100))),
        )
        return render_completion("maybe here", answer)

    corpus = []
    for i in range(n):
        roll = rng.random()
        if roll < 0.04:
            corpus.append('{"type": "health"}')
        elif roll < 0.08:
            corpus.append(json.dumps({"type": "no_such_thing", "id": f"u{i}"}))
        elif roll < 0.12:
            corpus.append("{malformed " + str(i))
        elif roll < 0.16:
            bad_gt = dict(gt, bbox=[60, 10, 10, 50])
            corpus.append(json.dumps({"type": "score_group", "id": f"b{i}",
                                      "ground_truth": bad_gt, "completions": ["x"]}))
        else:
            g = int(rng.integers(1, 7))
            corpus.append(json.dumps({
                "type": "score_group",
                "id": f"r{i}",
                "ground_truth": gt,
                "completions": [random_completion() for _ in range(g)],
            }))
    return corpus


@pytest.fixture(scope="module")
def live_server():
    server = RewardServer("127.0.0.1", 0, max_conns=64)
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05})
    thread.start()
    try:
        yield server.bound_address
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=10)


def _pipeline(address, lines: list[str]) -> list[str]:
    host, port = address
    out = []
    with socket.create_connection((host, port), timeout=30) as conn:
        fh = conn.makefile("rwb")
        for line in lines:
            fh.write(line.encode("utf-8") + b"\n")
        fh.flush()
        for _ in lines:
            out.append(fh.readline().decode("utf-8").rstrip("\n"))
    return out


def test_service_conformance(tmp_path, live_server):
    start = time.monotonic()
    corpus = build_golden_corpus(500)

    # offline
    src = tmp_path / "golden_in.jsonl"
    dst = tmp_path / "golden_out.jsonl"
    src.write_text("\n".join(corpus) + "\n", encoding="utf-8")
    summary = score_batch_file(str(src), str(dst))
    offline = dst.read_text(encoding="utf-8").splitlines()
    assert summary.requests == 500

    # online, one pipelined connection
    online = _pipeline(live_server, corpus)
    assert online == offline, "online and offline responses differ"

    # 32 concurrent connections, corpus interleaved round-robin
    buckets: list[list[tuple[int, str]]] = [[] for _ in range(32)]
    for index, line in enumerate(corpus):
        buckets[index % 32].append((index, line))

    merged: dict[int, str] = {}
    errors: list[Exception] = []
    lock = threading.Lock()

    def worker(bucket: list[tuple[int, str]]) -> None:
        try:
            responses = _pipeline(live_server, [line for _, line in bucket])
            with lock:
                for (index, _), response in zip(bucket, responses):
                    merged[index] = response
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(b,)) for b in buckets if b]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    assert not errors, f"concurrent workers failed: {errors!r}"
    concurrent = [merged[i] for i in range(len(corpus))]
    assert concurrent == offline, "interleaved responses differ from serial"

    # statelessness spot check: the same line mid-stream answers identically
    line = corpus[100]
    assert handle_request_line(line) == concurrent[100] == offline[100]

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"service conformance took {elapsed:.2f}s (limit 60s)"
    report("service-conformance", True,
           f"500-request corpus byte-identical offline/online/32-way, {elapsed:.2f}s")
