"""Shared test utilities: random inputs and independent oracle computations.

Everything here is deliberately written from scratch against the documented
rules rather than reusing the library's own pipeline code, so tests compare
two independent routes to the same answer.
"""

from __future__ import annotations

import math

import numpy as np

from roadkit.formats import AnnotationRecord, DetectionRecord, Occlusion
from roadkit.geometry import Box3D, EulerOrientation, box_corners, iou3d, rotation_from_euler


def random_orientation(rng: np.random.Generator) -> EulerOrientation:
    yaw, pitch, roll = rng.uniform(-math.pi, math.pi, 3)
    return EulerOrientation(yaw, pitch, roll)


def random_box(
    rng: np.random.Generator,
    center_spread: float = 1.5,
    dim_range: tuple[float, float] = (0.5, 3.0),
) -> Box3D:
    return Box3D(
        center=tuple(rng.uniform(-center_spread, center_spread, 3)),
        dims=tuple(rng.uniform(dim_range[0], dim_range[1], 3)),
        orientation=random_orientation(rng),
    )


def point_in_box_mask(box: Box3D, points: np.ndarray) -> np.ndarray:
    rot = rotation_from_euler(box.orientation)
    local = (points - np.asarray(box.center)) @ rot
    h, w, l = box.dims
    half = np.array([w, h, l]) / 2.0
    return np.all(np.abs(local) <= half, axis=1)


def monte_carlo_intersection(
    a: Box3D, b: Box3D, n_samples: int, rng: np.random.Generator, chunk: int = 1 << 20
) -> float:
    """Uniform-sampling volume estimate over the overlap of the two AABBs."""
    ca, cb = box_corners(a), box_corners(b)
    lo = np.maximum(ca.min(axis=0), cb.min(axis=0))
    hi = np.minimum(ca.max(axis=0), cb.max(axis=0))
    if np.any(hi <= lo):
        return 0.0
    region = float(np.prod(hi - lo))
    hits = 0
    remaining = n_samples
    while remaining > 0:
        m = min(remaining, chunk)
        pts = rng.uniform(lo, hi, (m, 3))
        hits += int(np.count_nonzero(point_in_box_mask(a, pts) & point_in_box_mask(b, pts)))
        remaining -= m
    return hits / n_samples * region


def euler_matrix_oracle(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Independent factor-matrix product for the Y(yaw) X(pitch) Z(roll) convention."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return ry @ rx @ rz


# ---------------------------------------------------------------------------
# Brute-force PR/AP oracle over the documented matching and difficulty rules.

_DIFFICULTY_TABLE = (
    ("easy", 0, 0.15, 40.0),
    ("moderate", 1, 0.30, 25.0),
    ("hard", 2, 0.50, 25.0),
)


def oracle_difficulty(annotation: AnnotationRecord) -> str:
    height = math.inf
    if annotation.box2d is not None:
        height = max(annotation.box2d[3] - annotation.box2d[1], 0.0)
    for name, max_occ, max_trunc, min_height in _DIFFICULTY_TABLE:
        if (
            int(annotation.occlusion) <= max_occ
            and annotation.truncation <= max_trunc
            and height >= min_height
        ):
            return name
    return "ignored"


_LEVEL_ORDER = {"easy": 0, "moderate": 1, "hard": 2, "ignored": 3}


def _oracle_match_counts(frames, top_dets_by_frame, class_name, level, threshold, iou_of):
    """Greedy matching per frame restricted to a detection subset; quadratic."""
    tp = fp = 0
    for frame in frames:
        gts = [g for g in frame.annotations if g.class_name == class_name]
        eligible = [g for g in gts if _LEVEL_ORDER[oracle_difficulty(g)] <= _LEVEL_ORDER[level]]
        dontcare = [g for g in gts if _LEVEL_ORDER[oracle_difficulty(g)] > _LEVEL_ORDER[level]]
        dets = [d for d in top_dets_by_frame.get(frame.frame_id, []) if d.class_name == class_name]
        dets = sorted(dets, key=lambda d: -d.score)
        taken = [False] * len(eligible)
        for det in dets:
            best = -1
            best_iou = 0.0
            for gi, gt in enumerate(eligible):
                if taken[gi]:
                    continue
                overlap = iou_of(gt, det)
                if overlap >= threshold and overlap > best_iou:
                    best, best_iou = gi, overlap
            if best >= 0:
                taken[best] = True
                tp += 1
            elif any(iou_of(gt, det) >= threshold for gt in dontcare):
                pass  # don't-care overlap: neither TP nor FP
            else:
                fp += 1
    return tp, fp


def oracle_evaluate(manifest, detections_by_frame, iou_threshold=0.5, interpolation="r40"):
    """Exhaustive per-rank PR/AP recomputation; returns {class: {level: ap}}."""
    frames = sorted(manifest.frames, key=lambda f: f.frame_id)
    iou_cache: dict[tuple[int, int], float] = {}

    def iou_of(gt, det):
        key = (id(gt), id(det))
        if key not in iou_cache:
            iou_cache[key] = iou3d(gt.box3d, det.box3d)
        return iou_cache[key]

    results: dict[str, dict[str, float]] = {}
    for class_name in manifest.class_taxonomy:
        results[class_name] = {}
        pooled = []
        for frame in frames:
            for det in detections_by_frame.get(frame.frame_id, []):
                if det.class_name == class_name:
                    pooled.append(det)
        pooled.sort(key=lambda d: -d.score)
        for level, _, _, _ in _DIFFICULTY_TABLE:
            npos = 0
            for frame in frames:
                for gt in frame.annotations:
                    if gt.class_name == class_name and (
                        _LEVEL_ORDER[oracle_difficulty(gt)] <= _LEVEL_ORDER[level]
                    ):
                        npos += 1
            if npos == 0:
                results[class_name][level] = 0.0
                continue
            points = []
            for k in range(1, len(pooled) + 1):
                top = pooled[:k]
                by_frame: dict[str, list] = {}
                for det in top:
                    by_frame.setdefault(det.frame_id, []).append(det)
                tp, fp = _oracle_match_counts(
                    frames, by_frame, class_name, level, iou_threshold, iou_of
                )
                if tp + fp == 0:
                    continue
                points.append((tp / npos, tp / (tp + fp)))
            if interpolation == "r40":
                samples = [k / 40 for k in range(1, 41)]
            else:
                samples = [k / 10 for k in range(0, 11)]
            precisions = []
            for r in samples:
                best = 0.0
                for recall, precision in points:
                    if recall >= r and precision > best:
                        best = precision
                precisions.append(best)
            results[class_name][level] = sum(precisions) / len(samples) * 100.0
    return results


def make_annotation(
    class_name="Car",
    center=(0.0, 1.0, 20.0),
    dims=(1.5, 1.8, 4.2),
    yaw=0.0,
    pitch=0.0,
    roll=0.0,
    truncation=0.0,
    occlusion=Occlusion.FULLY_VISIBLE,
    box2d=None,
    frame_id="f0",
) -> AnnotationRecord:
    return AnnotationRecord(
        class_name=class_name,
        truncation=truncation,
        occlusion=occlusion,
        box2d=box2d,
        box3d=Box3D(center=center, dims=dims, orientation=EulerOrientation(yaw, pitch, roll)),
        frame_id=frame_id,
    )


def make_detection(score=1.0, **kwargs) -> DetectionRecord:
    ann = make_annotation(**kwargs)
    return DetectionRecord(
        class_name=ann.class_name,
        truncation=ann.truncation,
        occlusion=ann.occlusion,
        box2d=ann.box2d,
        box3d=ann.box3d,
        frame_id=ann.frame_id,
        score=score,
    )
