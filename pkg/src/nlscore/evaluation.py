"""Metrics over trial scores: equal error rate, identification rate, and
detection error tradeoff points.

EER convention: thresholds sweep the midpoints between adjacent distinct
pooled scores (plus sentinels beyond both ends); the false-accept rate is
the fraction of nontarget scores >= threshold and the false-reject rate the
fraction of target scores < threshold, so accepting on equality mirrors the
verification decision rule. The reported EER linearly interpolates between
the two thresholds bracketing the FAR/FRR crossing. The result depends only
on the order statistics, hence is invariant under strictly increasing score
transforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .rng import GaussianStream
from .scoring import ScoreMatrix, ScoreType

__all__ = [
    "TrialSet",
    "TrialPolicy",
    "MetricsReport",
    "compute_eer",
    "compute_idr",
    "det_points",
    "build_trials",
    "write_metrics_csv",
    "read_metrics_csv",
    "METRICS_CSV_HEADER",
]


@dataclass(frozen=True)
class TrialSet:
    """Scores of target (test vs true class) and nontarget trials."""

    target_scores: np.ndarray
    nontarget_scores: np.ndarray

    def __post_init__(self):
        for name in ("target_scores", "nontarget_scores"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if arr.size == 0:
                raise ValueError(f"{name} must be nonempty")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class TrialPolicy:
    """How nontarget trials are built: every other class, or a seeded sample
    of m other classes per test."""

    kind: str = "all"
    m: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("all", "sampled"):
            raise ValueError(f"trial policy kind must be all|sampled, got {self.kind!r}")
        if self.kind == "sampled" and self.m < 1:
            raise ValueError("sampled trial policy needs m >= 1")

    @classmethod
    def parse(cls, text: str) -> "TrialPolicy":
        parts = str(text).split(":")
        if parts[0] == "all" and len(parts) == 1:
            return cls()
        if parts[0] == "sampled" and len(parts) == 3:
            return cls("sampled", int(parts[1]), int(parts[2]))
        raise ValueError(
            f"trial_policy must be 'all' or 'sampled:<m>:<seed>', got {text!r}"
        )

    def format(self) -> str:
        if self.kind == "all":
            return "all"
        return f"sampled:{self.m}:{self.seed}"


@dataclass(frozen=True)
class MetricsReport:
    """Metrics for one (score type, dimension, sigma, round) grid cell."""

    experiment: str
    score_type: ScoreType
    dim: int
    sigma: float
    round: int
    eer: float
    idr: float
    n_target: int
    n_nontarget: int
    n_identification_trials: int

    def __post_init__(self):
        if not 0.0 <= self.eer <= 0.6:
            raise ValueError(f"eer out of range: {self.eer!r}")
        if not 0.0 <= self.idr <= 1.0:
            raise ValueError(f"idr out of range: {self.idr!r}")
        if min(self.n_target, self.n_nontarget, self.n_identification_trials) <= 0:
            raise ValueError("trial counts must be positive")


def _far_frr(thresholds, target_sorted, nontarget_sorted):
    n_tar = target_sorted.size
    n_non = nontarget_sorted.size
    far = (n_non - np.searchsorted(nontarget_sorted, thresholds, side="left")) / n_non
    frr = np.searchsorted(target_sorted, thresholds, side="left") / n_tar
    return far, frr


def compute_eer(trials: TrialSet) -> float:
    """EER at the FAR/FRR crossing of the pooled midpoint threshold sweep.

    The midpoint threshold just above score value v has FAR = (nontargets
    > v)/n and FRR = (targets <= v)/n, both step functions of v, and their
    difference is non-increasing, so the crossing is binary-searched instead
    of evaluated at every midpoint. Counts and the interpolation arithmetic
    are exactly those of the full sweep (the tests hold this to a brute-force
    sweep oracle with equality, not tolerance).
    """
    tar = np.sort(trials.target_scores)
    non = np.sort(trials.nontarget_scores)
    n_tar, n_non = tar.size, non.size

    def far_frr_above(v):
        far = (n_non - int(np.searchsorted(non, v, side="right"))) / n_non
        frr = int(np.searchsorted(tar, v, side="right")) / n_tar
        return far, frr

    def first_crossing(arr):
        # first index whose value v has far-frr <= 0 just above v; predicate
        # is monotone along the sorted array
        lo, hi = 0, arr.size
        while lo < hi:
            mid = (lo + hi) // 2
            far, frr = far_frr_above(arr[mid])
            if far - frr <= 0.0:
                hi = mid
            else:
                lo = mid + 1
        return lo

    i_non = first_crossing(non)
    i_tar = first_crossing(tar)
    v_cur = np.inf
    if i_non < n_non:
        v_cur = non[i_non]
    if i_tar < n_tar:
        v_cur = min(v_cur, tar[i_tar])
    # a crossing always exists: above the maximum score far=0 and frr=1
    far_cur, frr_cur = far_frr_above(v_cur)
    diff_cur = far_cur - frr_cur
    if diff_cur == 0.0:
        return float(far_cur)
    # bracketing threshold: the midpoint just above the largest score value
    # below v_cur, or the below-everything sentinel if there is none
    j_non = int(np.searchsorted(non, v_cur, side="left"))
    j_tar = int(np.searchsorted(tar, v_cur, side="left"))
    if j_non == 0 and j_tar == 0:
        far_prev, frr_prev = 1.0, 0.0
    else:
        v_prev = -np.inf
        if j_non > 0:
            v_prev = non[j_non - 1]
        if j_tar > 0:
            v_prev = max(v_prev, tar[j_tar - 1])
        far_prev, frr_prev = far_frr_above(v_prev)
    diff_prev = far_prev - frr_prev
    lam = diff_prev / (diff_prev - diff_cur)
    return float(far_prev + lam * (far_cur - far_prev))


def det_points(trials: TrialSet, n_points: int):
    """(threshold, FAR, FRR) rows on an even threshold grid over the score
    span; FAR is non-increasing and FRR non-decreasing along the grid."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    tar = np.sort(trials.target_scores)
    non = np.sort(trials.nontarget_scores)
    pooled = np.concatenate((tar, non))
    thresholds = np.linspace(float(pooled.min()), float(pooled.max()), int(n_points))
    far, frr = _far_frr(thresholds, tar, non)
    return [(float(t), float(a), float(r)) for t, a, r in zip(thresholds, far, frr)]


def _matrix_values(scores) -> np.ndarray:
    if isinstance(scores, ScoreMatrix):
        return scores.values
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"scores must be a (tests, classes) matrix, got {arr.shape}")
    return arr


def compute_idr(scores, true_class) -> float:
    """Fraction of tests whose best-scoring class (lowest index on ties) is
    the true class."""
    values = _matrix_values(scores)
    truth = np.asarray(true_class, dtype=np.int64)
    if values.shape[0] == 0 or values.shape[1] == 0:
        raise ValueError("score matrix must be nonempty")
    if truth.shape != (values.shape[0],):
        raise ValueError(
            f"true_class must have shape ({values.shape[0]},), got {truth.shape}"
        )
    if truth.min() < 0 or truth.max() >= values.shape[1]:
        raise ValueError("true_class contains out-of-range class indices")
    return float(np.mean(np.argmax(values, axis=1) == truth))


def build_trials(scores, true_class, policy: TrialPolicy = TrialPolicy()) -> TrialSet:
    """Split matrix cells into target and nontarget trial scores."""
    values = _matrix_values(scores)
    n, k = values.shape
    if k < 2:
        raise ValueError("at least two classes are required to build trials")
    truth = np.asarray(true_class, dtype=np.int64)
    if truth.shape != (n,):
        raise ValueError(f"true_class must have shape ({n},), got {truth.shape}")
    rows = np.arange(n)
    target = values[rows, truth]
    if policy.kind == "all":
        mask = np.ones_like(values, dtype=bool)
        mask[rows, truth] = False
        nontarget = values[mask]
    else:
        m = policy.m
        if m > k - 1:
            raise ValueError(f"cannot sample {m} nontarget classes from {k - 1}")
        stream = GaussianStream.from_seed(policy.seed).child("trial-sampling")
        cols = np.empty((n, m), dtype=np.int64)
        for j in range(m):
            # draw among classes not yet used in this row: shift over the
            # true class and the previously drawn columns
            draw = stream.integers(k - 1 - j, n)
            taken = np.concatenate((truth[:, None], cols[:, :j]), axis=1)
            taken = np.sort(taken, axis=1)
            for c in range(taken.shape[1]):
                draw = draw + (draw >= taken[:, c])
            cols[:, j] = draw
        nontarget = values[rows[:, None], cols].ravel()
    return TrialSet(target, nontarget)


# ---------------------------------------------------------------------------
# metrics CSV
# ---------------------------------------------------------------------------

METRICS_CSV_HEADER = [
    "experiment",
    "score_type",
    "dim",
    "sigma",
    "round",
    "eer",
    "idr",
    "n_target",
    "n_nontarget",
    "n_id_trials",
]


def _sort_key(r: MetricsReport):
    return (r.experiment, r.score_type.value, r.dim, r.sigma, r.round)


def write_metrics_csv(reports, path) -> None:
    """One row per report, sorted, floats at 9 significant digits."""
    rows = sorted(reports, key=_sort_key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.experiment,
                    r.score_type.value,
                    r.dim,
                    f"{r.sigma:.9g}",
                    r.round,
                    f"{r.eer:.9g}",
                    f"{r.idr:.9g}",
                    r.n_target,
                    r.n_nontarget,
                    r.n_identification_trials,
                ]
            )


def read_metrics_csv(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_CSV_HEADER:
            raise ValueError(f"unexpected metrics header: {header}")
        out = []
        for row in reader:
            out.append(
                MetricsReport(
                    experiment=row[0],
                    score_type=ScoreType(row[1]),
                    dim=int(row[2]),
                    sigma=float(row[3]),
                    round=int(row[4]),
                    eer=float(row[5]),
                    idr=float(row[6]),
                    n_target=int(row[7]),
                    n_nontarget=int(row[8]),
                    n_identification_trials=int(row[9]),
                )
            )
        return out
