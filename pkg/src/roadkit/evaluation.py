"""Detection matching, interpolated average precision, and report tooling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .datasets import DifficultyLevel, assign_difficulty
from .errors import (
    EmptyInputError,
    FrameReferenceError,
    SchemaError,
    TaxonomyError,
    ValidationError,
)
from .formats import AnnotationRecord, DatasetManifest, DetectionRecord
from .geometry import iou3d, rotation_from_euler

LEVELS = (DifficultyLevel.EASY, DifficultyLevel.MODERATE, DifficultyLevel.HARD)
LEVEL_NAMES = {
    DifficultyLevel.EASY: "easy",
    DifficultyLevel.MODERATE: "moderate",
    DifficultyLevel.HARD: "hard",
}


@dataclass(frozen=True)
class MatchResult:
    """Per-frame greedy matching outcome at one IoU threshold.

    Indices refer to the input sequences. Detections in ignored_det overlap
    only out-of-level (don't-care) ground truth and count as neither TP nor
    FP.
    """

    pairs: tuple[tuple[int, int, float], ...]  # (gt_idx, det_idx, iou)
    unmatched_gt: tuple[int, ...]  # false negatives
    unmatched_det: tuple[int, ...]  # false positives
    ignored_det: tuple[int, ...] = ()


def match_frame(
    gts: Sequence[AnnotationRecord],
    dets: Sequence[DetectionRecord],
    iou_threshold: float,
    class_name: str | None = None,
    ignored_gt: frozenset[int] | set[int] | None = None,
) -> MatchResult:
    """Greedily match detections to ground truth within one frame.

    Detections are processed in descending score (ties by input order) and
    matched to the unmatched same-class GT with the highest iou3d at or above
    the threshold. GT indices in ignored_gt are don't-care: they cannot be
    matched or counted, and a detection whose only qualifying overlap is with
    such a GT is ignored rather than counted as a false positive.
    """
    if not (0.0 < iou_threshold < 1.0):
        raise ValidationError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    ignored_gt = frozenset(ignored_gt or ())
    gt_eligible = [
        i
        for i, g in enumerate(gts)
        if (class_name is None or g.class_name == class_name) and i not in ignored_gt
    ]
    gt_dontcare = [
        i
        for i, g in enumerate(gts)
        if (class_name is None or g.class_name == class_name) and i in ignored_gt
    ]
    det_order = sorted(
        (i for i, d in enumerate(dets) if class_name is None or d.class_name == class_name),
        key=lambda i: -dets[i].score,
    )
    matched_gt: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    false_pos: list[int] = []
    ignored_det: list[int] = []
    for di in det_order:
        best_iou = 0.0
        best_gt: int | None = None
        for gi in gt_eligible:
            if gi in matched_gt:
                continue
            overlap = iou3d(gts[gi].box3d, dets[di].box3d)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gt = gi
        if best_gt is not None:
            matched_gt.add(best_gt)
            pairs.append((best_gt, di, best_iou))
            continue
        if any(
            iou3d(gts[gi].box3d, dets[di].box3d) >= iou_threshold for gi in gt_dontcare
        ):
            ignored_det.append(di)
        else:
            false_pos.append(di)
    unmatched_gt = tuple(i for i in gt_eligible if i not in matched_gt)
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_gt=unmatched_gt,
        unmatched_det=tuple(false_pos),
        ignored_det=tuple(ignored_det),
    )


@dataclass(frozen=True)
class PRCurve:
    """Precision-recall points in descending-score detection order."""

    points: tuple[tuple[float, float], ...]  # (recall, precision)

    @classmethod
    def from_flags(cls, tp_flags: Sequence[bool], total_gt: int) -> "PRCurve":
        points = []
        tp = fp = 0
        for flag in tp_flags:
            if flag:
                tp += 1
            else:
                fp += 1
            recall = tp / total_gt if total_gt > 0 else 0.0
            precision = tp / (tp + fp)
            points.append((recall, precision))
        return cls(points=tuple(points))


def average_precision(curve: PRCurve, interpolation: str = "r40") -> float:
    """Interpolated average precision on a 0-100 scale.

    r40 samples recall at {k/40 : k = 1..40}; r11 at {k/10 : k = 0..10}.
    Interpolated precision at r is the maximum precision at any recall >= r.
    """
    if interpolation == "r40":
        samples = [k / 40 for k in range(1, 41)]
    elif interpolation == "r11":
        samples = [k / 10 for k in range(0, 11)]
    else:
        raise ValidationError(f"unknown interpolation {interpolation!r}")
    precisions = []
    for r in samples:
        best = 0.0
        for recall, precision in curve.points:
            if recall >= r and precision > best:
                best = precision
        precisions.append(best)
    return sum(precisions) / len(samples) * 100.0


@dataclass(frozen=True)
class EvalCell:
    ap: float
    gt: int
    tp: int
    fp: int
    fn: int


@dataclass
class EvalConfig:
    iou_threshold: float = 0.5
    per_class_iou: dict[str, float] = field(default_factory=dict)
    interpolation: str = "r40"

    def threshold_for(self, class_name: str) -> float:
        return self.per_class_iou.get(class_name, self.iou_threshold)


@dataclass
class EvalReport:
    """Per class x difficulty AP cells plus aggregate mAP per difficulty."""

    cells: dict[str, dict[str, EvalCell]]
    map3d: dict[str, float]
    iou_threshold: float = 0.5
    interpolation: str = "r40"

    @classmethod
    def from_map_values(
        cls,
        easy: float,
        moderate: float,
        hard: float,
        class_name: str = "all",
        iou_threshold: float = 0.5,
        interpolation: str = "r40",
    ) -> "EvalReport":
        """Build a fixture report from aggregate per-difficulty values."""
        values = {"easy": easy, "moderate": moderate, "hard": hard}
        cells = {class_name: {lvl: EvalCell(ap=v, gt=0, tp=0, fp=0, fn=0) for lvl, v in values.items()}}
        return cls(cells=cells, map3d=dict(values), iou_threshold=iou_threshold, interpolation=interpolation)

    def to_json(self) -> str:
        doc = {
            "iou_threshold": self.iou_threshold,
            "interpolation": self.interpolation,
            "classes": {
                cls_name: {
                    lvl: {"ap": c.ap, "gt": c.gt, "tp": c.tp, "fp": c.fp, "fn": c.fn}
                    for lvl, c in by_level.items()
                }
                for cls_name, by_level in self.cells.items()
            },
            "map": self.map3d,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        try:
            doc = json.loads(text)
            cells = {
                cls_name: {
                    lvl: EvalCell(ap=c["ap"], gt=c["gt"], tp=c["tp"], fp=c["fp"], fn=c["fn"])
                    for lvl, c in by_level.items()
                }
                for cls_name, by_level in doc["classes"].items()
            }
            return cls(
                cells=cells,
                map3d={k: float(v) for k, v in doc["map"].items()},
                iou_threshold=float(doc["iou_threshold"]),
                interpolation=doc["interpolation"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SchemaError(f"malformed report document: {exc}") from exc


def _gt_difficulty(annotation: AnnotationRecord) -> DifficultyLevel:
    # Projected height comes from the annotation's 2D box when present;
    # without one, height-based gating is disabled for that object.
    if annotation.box2d is not None:
        height = annotation.box2d[3] - annotation.box2d[1]
    else:
        height = math.inf
    return assign_difficulty(annotation, max(height, 0.0))


def _group_detections(
    manifest: DatasetManifest,
    detections: Mapping[str, Sequence[DetectionRecord]] | Sequence[DetectionRecord],
) -> dict[str, list[DetectionRecord]]:
    if isinstance(detections, Mapping):
        grouped = {fid: list(dets) for fid, dets in detections.items()}
    else:
        grouped = {}
        for det in detections:
            grouped.setdefault(det.frame_id, []).append(det)
    known = set(manifest.frame_ids)
    taxonomy = set(manifest.class_taxonomy)
    for fid, dets in grouped.items():
        if fid not in known:
            raise FrameReferenceError(f"detections reference unknown frame {fid!r}")
        for det in dets:
            if det.class_name not in taxonomy:
                raise TaxonomyError(f"detection class {det.class_name!r} not in taxonomy")
    return grouped


def evaluate(
    manifest: DatasetManifest,
    detections: Mapping[str, Sequence[DetectionRecord]] | Sequence[DetectionRecord],
    config: EvalConfig | None = None,
) -> EvalReport:
    """Per class x difficulty AP over a manifest, pooled across frames.

    Frames are merged in sorted frame-id order, so results are independent of
    any parallel per-frame processing order. mAP per difficulty is the
    unweighted mean over classes that have at least one in-level GT box.
    """
    config = config or EvalConfig()
    grouped = _group_detections(manifest, detections)
    frames = sorted(manifest.frames, key=lambda f: f.frame_id)
    cells: dict[str, dict[str, EvalCell]] = {}
    for cls_name in manifest.class_taxonomy:
        threshold = config.threshold_for(cls_name)
        by_level: dict[str, EvalCell] = {}
        for level in LEVELS:
            flags: list[tuple[float, int, bool]] = []  # (score, seq, is_tp)
            npos = 0
            seq = 0
            for frame in frames:
                gts = frame.annotations
                dets = grouped.get(frame.frame_id, [])
                difficulties = [_gt_difficulty(g) for g in gts]
                ignored = {
                    i
                    for i, d in enumerate(difficulties)
                    if d > level or d == DifficultyLevel.IGNORED
                }
                npos += sum(
                    1
                    for i, g in enumerate(gts)
                    if g.class_name == cls_name and i not in ignored
                )
                result = match_frame(gts, dets, threshold, cls_name, ignored)
                for _, di, _ in result.pairs:
                    flags.append((dets[di].score, seq, True))
                    seq += 1
                for di in result.unmatched_det:
                    flags.append((dets[di].score, seq, False))
                    seq += 1
            flags.sort(key=lambda item: (-item[0], item[1]))
            curve = PRCurve.from_flags([f[2] for f in flags], npos)
            ap = average_precision(curve, config.interpolation) if npos > 0 else 0.0
            tp = sum(1 for f in flags if f[2])
            fp = len(flags) - tp
            by_level[LEVEL_NAMES[level]] = EvalCell(ap=ap, gt=npos, tp=tp, fp=fp, fn=npos - tp)
        cells[cls_name] = by_level
    map3d = {}
    for level in LEVELS:
        name = LEVEL_NAMES[level]
        aps = [by_level[name].ap for by_level in cells.values() if by_level[name].gt > 0]
        map3d[name] = sum(aps) / len(aps) if aps else 0.0
    return EvalReport(
        cells=cells,
        map3d=map3d,
        iou_threshold=config.iou_threshold,
        interpolation=config.interpolation,
    )


@dataclass(frozen=True)
class ErrorBreakdown:
    """Post-hoc error metrics over matched GT/detection pairs."""

    cls_error: float  # misclassification rate
    pos_error: float  # mean center distance, meters
    dim_error: float  # mean absolute (h, w, l) deviation, meters
    ori_error: float  # mean geodesic rotation angle, radians


def error_breakdown(
    pairs: Sequence[tuple[AnnotationRecord, DetectionRecord]],
) -> ErrorBreakdown:
    """Classification/position/dimension/orientation errors over matches."""
    if not pairs:
        raise EmptyInputError("error_breakdown requires at least one matched pair")
    cls_errors = []
    pos_errors = []
    dim_errors = []
    ori_errors = []
    for gt, det in pairs:
        cls_errors.append(0.0 if gt.class_name == det.class_name else 1.0)
        pos_errors.append(
            float(np.linalg.norm(np.asarray(gt.box3d.center) - np.asarray(det.box3d.center)))
        )
        dim_errors.append(
            float(np.mean(np.abs(np.asarray(gt.box3d.dims) - np.asarray(det.box3d.dims))))
        )
        rel = rotation_from_euler(gt.box3d.orientation).T @ rotation_from_euler(det.box3d.orientation)
        cos_angle = (np.trace(rel) - 1.0) / 2.0
        ori_errors.append(math.acos(min(1.0, max(-1.0, cos_angle))))
    n = len(pairs)
    return ErrorBreakdown(
        cls_error=sum(cls_errors) / n,
        pos_error=sum(pos_errors) / n,
        dim_error=sum(dim_errors) / n,
        ori_error=sum(ori_errors) / n,
    )


@dataclass(frozen=True)
class ImprovementTable:
    """Percent change per report cell; None marks an undefined (zero) baseline."""

    cells: tuple[tuple[str, tuple[tuple[str, float | None], ...]], ...]
    map_change: tuple[tuple[str, float | None], ...]

    def cell(self, class_name: str, level: str) -> float | None:
        return dict(dict(self.cells)[class_name])[level]

    def render(self) -> str:
        lines = []
        header = ["Class"] + [lvl for lvl, _ in self.map_change]
        rows = [header]
        for cls_name, by_level in self.cells:
            row = [cls_name]
            for _, change in by_level:
                row.append("undefined" if change is None else f"{change:+.1f}%")
            rows.append(row)
        map_row = ["mAP"]
        for _, change in self.map_change:
            map_row.append("undefined" if change is None else f"{change:+.1f}%")
        rows.append(map_row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        for row in rows:
            lines.append(" | ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"


def _percent_change(baseline: float, treatment: float) -> float | None:
    if baseline == 0.0:
        return None
    return round((treatment - baseline) / baseline * 100.0, 1)


def compare_reports(baseline: EvalReport, treatment: EvalReport) -> ImprovementTable:
    """Percent change per cell, (treatment - baseline) / baseline * 100.

    Cells with a zero baseline are reported as undefined (None) rather than
    raising.
    """
    if set(baseline.cells) != set(treatment.cells):
        raise ValidationError("reports cover different class sets")
    cells = []
    for cls_name in baseline.cells:
        if set(baseline.cells[cls_name]) != set(treatment.cells[cls_name]):
            raise ValidationError(f"reports cover different levels for {cls_name!r}")
        by_level = tuple(
            (lvl, _percent_change(baseline.cells[cls_name][lvl].ap, treatment.cells[cls_name][lvl].ap))
            for lvl in baseline.cells[cls_name]
        )
        cells.append((cls_name, by_level))
    if set(baseline.map3d) != set(treatment.map3d):
        raise ValidationError("reports cover different difficulty levels")
    map_change = tuple(
        (lvl, _percent_change(baseline.map3d[lvl], treatment.map3d[lvl]))
        for lvl in baseline.map3d
    )
    return ImprovementTable(cells=tuple(cells), map_change=map_change)


@dataclass(frozen=True)
class ReportRow:
    """One rendered result row: schedule labels plus the evaluated report."""

    report: EvalReport
    architecture: str = "Cube R-CNN"
    pretrain_set: str | None = None
    finetune_chain: tuple[str, ...] = ()
    eval_set: str = ""


_RENDER_COLUMNS = (
    "Architecture",
    "Pre-Train Set",
    "Fine-Tuning Set",
    "Evaluation Set",
    "Easy",
    "Moderate",
    "Hard",
)


def render_report(rows: Sequence[ReportRow]) -> str:
    """Render reports as a fixed-column text table, AP values at 2 decimals."""
    if not rows:
        raise EmptyInputError("render_report requires at least one row")
    table = [list(_RENDER_COLUMNS)]
    for row in rows:
        table.append(
            [
                row.architecture,
                row.pretrain_set or "-",
                " -> ".join(row.finetune_chain) if row.finetune_chain else "-",
                row.eval_set or "-",
                f"{row.report.map3d['easy']:.2f}",
                f"{row.report.map3d['moderate']:.2f}",
                f"{row.report.map3d['hard']:.2f}",
            ]
        )
    widths = [max(len(r[i]) for r in table) for i in range(len(_RENDER_COLUMNS))]
    lines = [" | ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
