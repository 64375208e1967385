"""Precision-recall evaluation, dataset reports and runtime/MAC benchmarks."""

from __future__ import annotations

import csv
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import clone

from .features import mac_counts, sparse_conv
from .imaging import list_images, load_image
from .validation import as_rgb

log = logging.getLogger(__name__)

N_THRESHOLDS = 256


@dataclass(frozen=True, eq=False)
class PRCurve:
    """Confusion counts and rates at integer thresholds 0..255.

    A pixel is predicted salient at threshold ``t`` when ``map * 255 >= t``.
    Precision is 1 where nothing is predicted salient.
    """

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    positives: int
    negatives: int

    @property
    def fpr(self) -> np.ndarray:
        if self.negatives == 0:
            return np.full(len(self.thresholds), np.nan)
        return self.fp / self.negatives


def check_mask(gt) -> np.ndarray:
    gt = np.asarray(gt)
    if gt.ndim == 3 and gt.shape[2] == 1:
        gt = gt[:, :, 0]
    if gt.ndim != 2:
        raise ValueError(f"ground truth must be 2-D, got shape {gt.shape}")
    if gt.dtype != bool:
        if not np.all(np.isin(gt, (0, 1))):
            raise ValueError("ground truth values must be 0 or 1")
        gt = gt.astype(bool)
    return gt


def pr_curve(saliency, gt) -> PRCurve:
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.ndim == 3 and saliency.shape[2] == 1:
        saliency = saliency[:, :, 0]
    gt = check_mask(gt)
    if saliency.shape != gt.shape:
        raise ValueError(f"map {saliency.shape} and ground truth {gt.shape} differ in size")
    if not np.all(np.isfinite(saliency)) or saliency.min() < 0 or saliency.max() > 1:
        raise ValueError("saliency values must lie in [0, 1]")
    positives = int(gt.sum())
    if positives == 0:
        raise ValueError("ground truth has no positive pixel")
    # floor(x) >= t  <=>  x >= t for integer t
    level = np.clip(np.floor(saliency * 255.0), 0, N_THRESHOLDS - 1).astype(np.intp)
    hist_pos = np.bincount(level[gt], minlength=N_THRESHOLDS)
    hist_neg = np.bincount(level[~gt], minlength=N_THRESHOLDS)
    tp = np.cumsum(hist_pos[::-1])[::-1]
    fp = np.cumsum(hist_neg[::-1])[::-1]
    predicted = tp + fp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)
    recall = tp / positives
    return PRCurve(np.arange(N_THRESHOLDS), precision, recall, tp, fp, positives, gt.size - positives)


def auc(curve: PRCurve) -> float:
    """Trapezoidal area under precision(recall).

    Points are ordered by recall (ties: higher precision first) and the curve
    starts at recall 0 with the maximum precision.
    """
    r = np.asarray(curve.recall, dtype=np.float64)
    p = np.asarray(curve.precision, dtype=np.float64)
    order = np.lexsort((-p, r))
    r = np.r_[0.0, r[order]]
    p = np.r_[p.max(), p[order]]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def roc_auc(curve: PRCurve) -> float:
    """Trapezoidal area under TPR(FPR); NaN when the mask has no negatives."""
    if curve.negatives == 0:
        return float("nan")
    x = np.r_[0.0, curve.fpr, 1.0]
    y = np.r_[0.0, curve.recall, 1.0]
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def f_measure(precision, recall, beta2=0.3):
    """``(1 + beta2) P R / (beta2 P + R)``, 0 where the denominator vanishes."""
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    den = beta2 * precision + recall
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(den > 0, (1 + beta2) * precision * recall / np.where(den > 0, den, 1.0), 0.0)
    return float(f) if f.ndim == 0 else f


def max_f_measure(curve: PRCurve, beta2=0.3) -> float:
    return float(np.max(f_measure(curve.precision, curve.recall, beta2)))


# --------------------------------------------------------------------------
# datasets


@dataclass
class ImageResult:
    file: str
    auc_pr: float
    auc_roc: float
    max_f: float
    seconds: float
    precision: np.ndarray = field(repr=False)
    recall: np.ndarray = field(repr=False)


@dataclass
class DatasetReport:
    results: list
    errors: list

    @property
    def mean_precision(self) -> np.ndarray:
        return np.mean([r.precision for r in self.results], axis=0)

    @property
    def mean_recall(self) -> np.ndarray:
        return np.mean([r.recall for r in self.results], axis=0)

    @property
    def mean_auc(self) -> float:
        return float(np.mean([r.auc_pr for r in self.results]))


def load_mask(path) -> np.ndarray:
    img = load_image(path)
    return img.mean(axis=2) >= 0.5


def find_pairs(image_dir, gt_dir):
    """Match images to same-stem masks; returns ``(pairs, errors)`` sorted by name."""
    gt_index = {p.stem: p for p in list_images(gt_dir)}
    pairs, errors = [], []
    for img_path in list_images(image_dir):
        gt_path = gt_index.get(img_path.stem)
        if gt_path is None:
            errors.append((img_path.name, "no ground-truth mask with the same stem"))
        else:
            pairs.append((img_path, gt_path))
    return pairs, errors


def _evaluate_one(args):
    img_path, gt_path, detector = args
    try:
        img = load_image(img_path)
        gt = load_mask(gt_path)
        if img.shape[:2] != gt.shape:
            raise ValueError(f"image {img.shape[:2]} and mask {gt.shape} differ in size")
        t = time.perf_counter()
        saliency = detector(img)
        seconds = time.perf_counter() - t
        curve = pr_curve(saliency, gt)
    except Exception as exc:  # reported per file, the run continues
        return img_path.name, None, f"{type(exc).__name__}: {exc}"
    result = ImageResult(
        img_path.name, auc(curve), roc_auc(curve), max_f_measure(curve), seconds, curve.precision, curve.recall
    )
    return img_path.name, result, None


def evaluate_dataset(image_dir, gt_dir, detector, jobs=1) -> DatasetReport:
    """Run ``detector`` (image -> map in [0, 1]) over every image/mask pair.

    Results and aggregates are in filename order whatever ``jobs`` is.
    ``detector`` must be picklable when ``jobs > 1``.
    """
    pairs, errors = find_pairs(image_dir, gt_dir)
    tasks = [(i, g, detector) for i, g in pairs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_evaluate_one, tasks))
    else:
        outcomes = [_evaluate_one(t) for t in tasks]
    results = []
    for name, result, error in outcomes:
        if error is not None:
            log.warning("%s: %s", name, error)
            errors.append((name, error))
        else:
            results.append(result)
    results.sort(key=lambda r: r.file)
    errors.sort()
    return DatasetReport(results, errors)


def _fmt(x) -> str:
    return "nan" if x != x else f"{x:.8f}"


def write_report_csv(report: DatasetReport, path, timing=True) -> None:
    """Per-image rows then a ``MEAN`` row; ``seconds`` is blank when ``timing`` is off."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "auc_pr", "auc_roc", "max_f", "seconds"])
        for r in report.results:
            w.writerow([r.file, _fmt(r.auc_pr), _fmt(r.auc_roc), _fmt(r.max_f), _fmt(r.seconds) if timing else ""])
        if report.results:
            means = [np.mean([getattr(r, k) for r in report.results]) for k in ("auc_pr", "auc_roc", "max_f")]
            secs = float(np.mean([r.seconds for r in report.results]))
            w.writerow(["MEAN", *map(_fmt, means), _fmt(secs) if timing else ""])


def write_pr_csv(precision, recall, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for t, (p, r) in enumerate(zip(precision, recall)):
            w.writerow([t, _fmt(p), _fmt(r)])


# --------------------------------------------------------------------------
# benchmarking


@dataclass
class BenchReport:
    connectivity: float
    image_id: str
    stage_seconds: dict
    macs_actual: int
    macs_dense: int

    @property
    def total_seconds(self) -> float:
        return self.stage_seconds.get("total", sum(self.stage_seconds.values()))

    @property
    def mac_ratio(self) -> float:
        return self.macs_actual / self.macs_dense


def bench_pipeline(image, estimator, connectivities=(0.25, 0.75, 1.0), repeats=5, image_id="image", conv_only=False):
    """Median per-stage wall time and MAC counts for each connectivity level.

    ``estimator`` is an unfitted ``NeRDSaliency`` used as a template; each
    level refits a clone with its own ``connectivity``. One warm-up run
    precedes ``repeats`` timed runs. With ``conv_only`` only the convolution
    stage is timed.
    """
    if not connectivities:
        raise ValueError("at least one connectivity level is required")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    image = as_rgb(image)
    h, w = image.shape[:2]
    reports = []
    for p in connectivities:
        est = clone(estimator).set_params(connectivity=p).fit()
        stride, padding = est.block_config_.stride, est.block_config_.padding

        def run():
            if conv_only:
                t = time.perf_counter()
                sparse_conv(image, est.bank_, stride, padding)
                return {"conv": time.perf_counter() - t}
            return est.detect(image).timings

        run()
        samples = [run() for _ in range(repeats)]
        medians = {stage: statistics.median(s[stage] for s in samples) for stage in samples[0]}
        actual, dense = mac_counts(est.bank_, h, w, stride)
        reports.append(BenchReport(float(p), image_id, medians, actual, dense))
    return reports


def write_bench_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "stage", "macs_actual", "macs_dense", "seconds_median"])
        for r in reports:
            for stage, secs in r.stage_seconds.items():
                w.writerow([r.connectivity, stage, r.macs_actual, r.macs_dense, f"{secs:.6f}"])
