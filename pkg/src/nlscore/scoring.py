"""Trial scoring: normalized-likelihood scores, geometric scores, and an
independent joint-density likelihood-ratio oracle.

All exported scores are oriented larger = more target-like; the squared
Euclidean distance is negated accordingly so downstream metric code never
needs per-score polarity switches. Log-ratio scores keep their additive
constants, so they are true log likelihood ratios, comparable across models
and usable as calibrated posteriors through `nl_to_sv_posterior`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    CanonicalModel,
    Enrollment,
    _as_vector,
    conditional_log_density,
    marginal_log_density,
    predictive_log_density,
)

__all__ = [
    "ScoreType",
    "ScoreRecord",
    "ScoreMatrix",
    "PLDA_ORACLE_MAX_CELLS",
    "nl_known",
    "nl_unknown",
    "plda_lr_oracle",
    "nl_to_sv_posterior",
    "decide_sv",
    "cosine_score",
    "euclidean_score",
    "euclidean_amended_score",
    "score_matrix",
    "write_score_records",
    "SCORES_CSV_HEADER",
]


class ScoreType(enum.Enum):
    NL_KNOWN = "NL_KNOWN"
    NL_UNKNOWN = "NL_UNKNOWN"
    COSINE = "COSINE"
    EUCLIDEAN = "EUCLIDEAN"
    EUCLIDEAN_AMENDED = "EUCLIDEAN_AMENDED"
    PLDA_LR = "PLDA_LR"


# score families by what they need per class
MEAN_BASED_TYPES = frozenset(
    {ScoreType.NL_KNOWN, ScoreType.COSINE, ScoreType.EUCLIDEAN}
)
ENROLLMENT_BASED_TYPES = frozenset(
    {ScoreType.NL_UNKNOWN, ScoreType.EUCLIDEAN_AMENDED}
)
SAMPLE_BASED_TYPES = frozenset({ScoreType.PLDA_LR})

# the oracle builds explicit (n+1)d-dimensional joint covariances; keep
# n*dim small so memory stays bounded
PLDA_ORACLE_MAX_CELLS = 64


@dataclass(frozen=True)
class ScoreRecord:
    trial_id: str
    score_type: ScoreType
    value: float
    is_target: bool | None = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"score value must be finite, got {self.value!r}")


@dataclass(frozen=True)
class ScoreMatrix:
    """One score per (test, class) pair; records are materialized lazily."""

    score_type: ScoreType
    values: np.ndarray  # (n_tests, n_classes)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("score matrix contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_tests(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    def argmax_classes(self) -> np.ndarray:
        """Per-test best class; ties resolve to the lowest class index."""
        return np.argmax(self.values, axis=1)

    def record(self, test_idx: int, class_idx: int, true_class=None) -> ScoreRecord:
        is_target = None if true_class is None else bool(true_class == class_idx)
        return ScoreRecord(
            trial_id=f"t{test_idx}_c{class_idx}",
            score_type=self.score_type,
            value=float(self.values[test_idx, class_idx]),
            is_target=is_target,
        )

    def iter_records(self, true_class=None, prefix: str = ""):
        truth = None if true_class is None else np.asarray(true_class)
        for i in range(self.n_tests):
            ti = None if truth is None else int(truth[i])
            for k in range(self.n_classes):
                rec = self.record(i, k, ti)
                if prefix:
                    rec = ScoreRecord(
                        prefix + rec.trial_id, rec.score_type, rec.value, rec.is_target
                    )
                yield rec


# ---------------------------------------------------------------------------
# scalar scores
# ---------------------------------------------------------------------------


def nl_known(model: CanonicalModel, mu_k, x) -> float:
    """Log ratio of the class-conditional density at a known class mean to
    the class-independent marginal. Constants are kept, so this is an exact
    log likelihood ratio."""
    return conditional_log_density(model, mu_k, x) - marginal_log_density(model, x)


def nl_unknown(model: CanonicalModel, enrollment: Enrollment, x) -> float:
    """Same ratio with the class mean integrated over its enrollment
    posterior. With an empty enrollment the ratio is exactly 0."""
    return predictive_log_density(model, enrollment, x) - marginal_log_density(
        model, x
    )


def _dense_joint_cov(model: CanonicalModel, m: int) -> np.ndarray:
    """Covariance of m stacked observations from one class: between-class
    variance on every cross term, plus within-class variance on the diagonal."""
    d = model.dim
    cov = np.kron(np.ones((m, m)), np.diag(model.between_var))
    cov += model.within_var * np.eye(m * d)
    return cov


def _dense_logpdf(vec: np.ndarray, cov: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise np.linalg.LinAlgError("joint covariance is not positive definite")
    quad = float(vec @ np.linalg.solve(cov, vec))
    return -0.5 * (vec.size * math.log(2.0 * math.pi) + logdet + quad)


def plda_lr_oracle(model: CanonicalModel, enroll_samples, x) -> float:
    """log p(x, x_1..x_n) - log p(x) - log p(x_1..x_n) by direct evaluation
    of the stacked joint Gaussians.

    Deliberately does not reuse the posterior/predictive code path, so it
    serves as an independent cross-check for `nl_unknown`. Joint covariances
    are built explicitly, so n*dim is capped at PLDA_ORACLE_MAX_CELLS.
    """
    v = _as_vector(x, model.dim)
    samples = np.asarray(enroll_samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != model.dim:
        raise ValueError(
            f"enroll_samples must have shape (n, {model.dim}), got {samples.shape}"
        )
    n = samples.shape[0]
    if n < 1:
        raise ValueError("the likelihood-ratio oracle needs at least one sample")
    if n * model.dim > PLDA_ORACLE_MAX_CELLS:
        raise ValueError(
            f"n*dim = {n * model.dim} exceeds the oracle limit of "
            f"{PLDA_ORACLE_MAX_CELLS} cells"
        )
    stacked = np.concatenate([samples.ravel(), v])
    log_joint = _dense_logpdf(stacked, _dense_joint_cov(model, n + 1))
    log_test = _dense_logpdf(v, _dense_joint_cov(model, 1))
    log_enroll = _dense_logpdf(samples.ravel(), _dense_joint_cov(model, n))
    return log_joint - log_test - log_enroll


def nl_to_sv_posterior(log_nl: float) -> float:
    """Map a log likelihood ratio to the accept posterior under equal priors:
    exp(l) / (1 + exp(l)), computed without overflow on either tail."""
    l = float(log_nl)
    if not math.isfinite(l):
        raise ValueError(f"log_nl must be finite, got {l!r}")
    if l >= 0.0:
        return 1.0 / (1.0 + math.exp(-l))
    e = math.exp(l)
    return e / (1.0 + e)


def decide_sv(posterior: float, threshold: float = 0.5) -> bool:
    """Accept iff posterior >= threshold (boundary accepts)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold!r}")
    if not 0.0 <= posterior <= 1.0:
        raise ValueError(f"posterior must be in [0, 1], got {posterior!r}")
    return posterior >= threshold


def cosine_score(x, mu) -> float:
    """Cosine of the angle between a test vector and a class vector."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(mu, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine score is undefined for a zero-norm vector")
    return float(a @ b) / (na * nb)


def euclidean_score(x, mu) -> float:
    """Negated squared Euclidean distance (larger = more target-like)."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(mu, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    delta = a - b
    return -float(np.sum(delta * delta))


def euclidean_amended_score(model: CanonicalModel, enrollment: Enrollment, x) -> float:
    """Negated squared distance to the shrunk enrollment mean, which
    compensates the mean estimate for its enrollment-count uncertainty."""
    v = _as_vector(x, model.dim)
    if enrollment.dim != model.dim:
        raise ValueError("enrollment dimension does not match the model")
    return euclidean_score(v, enrollment.shrunk_mean)


# ---------------------------------------------------------------------------
# batch scoring
# ---------------------------------------------------------------------------


def _sqdist_matrix(tests: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Squared distances via the expansion ||x||^2 + ||m||^2 - 2 x.m, clipped
    at zero to absorb the rounding of the matrix product."""
    tn = np.sum(tests * tests, axis=1)[:, None]
    rn = np.sum(refs * refs, axis=1)[None, :]
    d2 = tn + rn - 2.0 * (tests @ refs.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _marginal_rows(model: CanonicalModel, tests: np.ndarray) -> np.ndarray:
    var = model.between_var + model.within_var
    return -0.5 * (
        float(np.sum(np.log(2.0 * np.pi * var)))
        + np.sum(tests * tests / var, axis=1)
    )


def _check_tests(model: CanonicalModel, tests) -> np.ndarray:
    arr = np.asarray(tests, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise ValueError(f"tests must have shape (n, {model.dim}), got {arr.shape}")
    return arr


def _class_means(model: CanonicalModel, classes) -> np.ndarray:
    arr = np.asarray(classes, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise ValueError(
            f"class means must have shape (K, {model.dim}), got {arr.shape}"
        )
    if arr.shape[0] == 0:
        raise ValueError("at least one class is required")
    return arr


def _class_enrollments(model: CanonicalModel, classes) -> list:
    enrollments = list(classes)
    if not enrollments:
        raise ValueError("at least one class is required")
    for e in enrollments:
        if not isinstance(e, Enrollment):
            raise TypeError(
                "this score type takes a sequence of Enrollment objects per class"
            )
        if e.dim != model.dim:
            raise ValueError("enrollment dimension does not match the model")
    return enrollments


def score_matrix(model: CanonicalModel, classes, tests, score_type: ScoreType) -> ScoreMatrix:
    """Score every (test, class) pair with one score type.

    `classes` depends on the score family: a (K, dim) array of class vectors
    for NL_KNOWN / COSINE / EUCLIDEAN, a sequence of Enrollment objects for
    NL_UNKNOWN / EUCLIDEAN_AMENDED, and a sequence of (n_k, dim) sample
    arrays for PLDA_LR. Output is deterministic given the inputs.
    """
    t = _check_tests(model, tests)

    if score_type in MEAN_BASED_TYPES:
        refs = _class_means(model, classes)
        if score_type is ScoreType.EUCLIDEAN:
            values = -_sqdist_matrix(t, refs)
        elif score_type is ScoreType.COSINE:
            tnorm = np.linalg.norm(t, axis=1)
            rnorm = np.linalg.norm(refs, axis=1)
            if np.any(tnorm == 0.0):
                bad = int(np.argmax(tnorm == 0.0))
                raise ValueError(f"test vector {bad} has zero norm")
            if np.any(rnorm == 0.0):
                bad = int(np.argmax(rnorm == 0.0))
                raise ValueError(f"class vector {bad} has zero norm")
            values = (t / tnorm[:, None]) @ (refs / rnorm[:, None]).T
        else:  # NL_KNOWN
            d2 = _sqdist_matrix(t, refs)
            log_cond = -0.5 * (
                d2 / model.within_var
                + model.dim * math.log(2.0 * math.pi * model.within_var)
            )
            values = log_cond - _marginal_rows(model, t)[:, None]
        return ScoreMatrix(score_type, values)

    if score_type in ENROLLMENT_BASED_TYPES:
        enrollments = _class_enrollments(model, classes)
        shrunk = np.stack([e.shrunk_mean for e in enrollments])
        if score_type is ScoreType.EUCLIDEAN_AMENDED:
            return ScoreMatrix(score_type, -_sqdist_matrix(t, shrunk))
        marg = _marginal_rows(model, t)[:, None]
        counts = {e.n for e in enrollments}
        if len(counts) == 1:
            # shared predictive variance: one weighted distance product
            pred_var = model.within_var + enrollments[0].posterior_var
            scale = 1.0 / np.sqrt(pred_var)
            d2w = _sqdist_matrix(t * scale, shrunk * scale)
            log_pred = -0.5 * (
                d2w + float(np.sum(np.log(2.0 * np.pi * pred_var)))
            )
            return ScoreMatrix(score_type, log_pred - marg)
        values = np.empty((t.shape[0], len(enrollments)))
        for k, e in enumerate(enrollments):
            pred_var = model.within_var + e.posterior_var
            delta = t - e.shrunk_mean
            values[:, k] = -0.5 * (
                np.sum(delta * delta / pred_var, axis=1)
                + float(np.sum(np.log(2.0 * np.pi * pred_var)))
            )
        return ScoreMatrix(score_type, values - marg)

    if score_type in SAMPLE_BASED_TYPES:
        sample_sets = [np.asarray(s, dtype=np.float64) for s in classes]
        if not sample_sets:
            raise ValueError("at least one class is required")
        values = np.empty((t.shape[0], len(sample_sets)))
        for k, samples in enumerate(sample_sets):
            for i in range(t.shape[0]):
                values[i, k] = plda_lr_oracle(model, samples, t[i])
        return ScoreMatrix(score_type, values)

    raise ValueError(f"unsupported score type: {score_type!r}")


# ---------------------------------------------------------------------------
# score dump
# ---------------------------------------------------------------------------

SCORES_CSV_HEADER = "trial_id,score_type,is_target,value"


def write_score_records(fh, matrix: ScoreMatrix, true_class=None, prefix: str = "") -> int:
    """Append CSV rows for every cell of a score matrix; values carry 17
    significant digits so they round-trip losslessly. Returns rows written."""
    count = 0
    for rec in matrix.iter_records(true_class, prefix):
        target = "" if rec.is_target is None else str(int(rec.is_target))
        fh.write(f"{rec.trial_id},{rec.score_type.value},{target},{rec.value:.17g}\n")
        count += 1
    return count
