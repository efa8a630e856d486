"""Linear Gaussian class models and their densities.

Two model forms are supported. The canonical form has independent
dimensions: class means are drawn with per-dimension variance
``between_var`` around zero, and observations scatter isotropically around
their class mean with variance ``within_var``. A general form carries full
covariance matrices plus a global mean; ``canonicalize`` reduces it to the
canonical form with an invertible linear map (whiten the within-class
covariance, then rotate to diagonalize the between-class covariance).

All densities are computed and exposed in the log domain only; linear-domain
densities underflow around d > 40 for unit variances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .kernels import jacobi_eigh

__all__ = [
    "MIN_VARIANCE",
    "CanonicalModel",
    "GeneralModel",
    "LinearTransform",
    "Enrollment",
    "canonicalize",
    "prior_log_density",
    "conditional_log_density",
    "marginal_log_density",
    "posterior",
    "posterior_log_density",
    "predictive_log_density",
    "apply_transform",
    "apply_inverse",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MIN_VARIANCE = 1e-12  # anything smaller is rejected, never silently clamped
_LOG_TAU = math.log(2.0 * math.pi)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_vector(x, dim: int, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (dim,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({dim},)")
    return v


@dataclass(frozen=True)
class CanonicalModel:
    """Diagonal linear Gaussian model: per-dimension between-class variance,
    scalar isotropic within-class variance."""

    dim: int
    between_var: np.ndarray
    within_var: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        bv = np.asarray(self.between_var, dtype=np.float64)
        if bv.shape != (self.dim,):
            raise ValueError(
                f"between_var has shape {bv.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(bv)) or np.any(bv < MIN_VARIANCE):
            raise ValueError(
                f"between_var entries must be finite and >= {MIN_VARIANCE}"
            )
        wv = float(self.within_var)
        if not math.isfinite(wv) or wv < MIN_VARIANCE:
            raise ValueError(f"within_var must be finite and >= {MIN_VARIANCE}")
        object.__setattr__(self, "between_var", _readonly(bv.copy()))
        object.__setattr__(self, "within_var", wv)


def _check_symmetric(m: np.ndarray, name: str) -> np.ndarray:
    scale = float(np.max(np.abs(m))) or 1.0
    if np.max(np.abs(m - m.T)) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric within 1e-10 relative tolerance")
    return 0.5 * (m + m.T)


def _check_spd(m: np.ndarray, name: str) -> None:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        smallest = float(jacobi_eigh(m)[0][-1])
        raise ValueError(
            f"{name} is not positive definite (smallest eigenvalue {smallest:.6g})"
        ) from None


@dataclass(frozen=True)
class GeneralModel:
    """Linear Gaussian model with full covariances and a global mean."""

    dim: int
    global_mean: np.ndarray
    between_cov: np.ndarray
    within_cov: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        mean = _as_vector(self.global_mean, self.dim, "global_mean")
        shape = (self.dim, self.dim)
        for name in ("between_cov", "within_cov"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.shape != shape:
                raise ValueError(f"{name} has shape {m.shape}, expected {shape}")
            m = _check_symmetric(m, name)
            _check_spd(m, name)
            object.__setattr__(self, name, _readonly(m))
        object.__setattr__(self, "global_mean", _readonly(mean.copy()))


@dataclass(frozen=True)
class LinearTransform:
    """Invertible map x -> matrix @ (x - offset), with its log |det| cached.

    For a linear map the density-change (volume) term is constant in x and
    equals -log_abs_det in the log domain.
    """

    matrix: np.ndarray
    offset: np.ndarray
    log_abs_det: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        d = m.shape[0]
        off = _as_vector(self.offset, d, "offset")
        sign, logdet = np.linalg.slogdet(m)
        if sign == 0.0 or np.linalg.cond(m) > 1e12:
            raise ValueError("matrix is numerically singular")
        if abs(float(self.log_abs_det) - logdet) >= 1e-8:
            raise ValueError(
                f"log_abs_det {self.log_abs_det!r} does not match the matrix "
                f"(recomputed {logdet!r})"
            )
        object.__setattr__(self, "matrix", _readonly(m.copy()))
        object.__setattr__(self, "offset", _readonly(off.copy()))
        object.__setattr__(self, "log_abs_det", float(self.log_abs_det))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Enrollment:
    """Posterior over one class mean given n enrollment samples.

    shrunk_mean = n*between_var / (n*between_var + within_var) * sample_mean
    posterior_var = within_var*between_var / (n*between_var + within_var)

    computed element-wise; n = 0 recovers the prior exactly.
    """

    class_id: str
    n: int
    sample_mean: np.ndarray
    shrunk_mean: np.ndarray
    posterior_var: np.ndarray

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        sm = np.asarray(self.sample_mean, dtype=np.float64)
        if sm.ndim != 1:
            raise ValueError("sample_mean must be a vector")
        d = sm.shape[0]
        mu = _as_vector(self.shrunk_mean, d, "shrunk_mean")
        pv = _as_vector(self.posterior_var, d, "posterior_var")
        if not (np.all(np.isfinite(sm)) and np.all(np.isfinite(mu))):
            raise ValueError("enrollment means must be finite")
        if not np.all(pv > 0.0):
            raise ValueError("posterior_var entries must be positive")
        object.__setattr__(self, "sample_mean", _readonly(sm.copy()))
        object.__setattr__(self, "shrunk_mean", _readonly(mu.copy()))
        object.__setattr__(self, "posterior_var", _readonly(pv.copy()))

    @property
    def dim(self) -> int:
        return self.sample_mean.shape[0]


# ---------------------------------------------------------------------------
# canonicalization
# ---------------------------------------------------------------------------

_PD_REL_TOL = 1e-12


def canonicalize(model: GeneralModel):
    """Reduce a general model to canonical form.

    Returns (canonical, transform) where transform maps observation space to
    the canonical space: T W T^T = I and T B T^T is diagonal; the diagonal
    becomes between_var, within_var is 1, and the offset is the global mean.
    """
    w_val, w_vec = jacobi_eigh(model.within_cov)
    if w_val[-1] <= _PD_REL_TOL * w_val[0]:
        raise ValueError(
            "within_cov is not positive definite "
            f"(smallest eigenvalue {float(w_val[-1]):.6g})"
        )
    whiten = w_vec.T / np.sqrt(w_val)[:, None]
    b_prime = whiten @ model.between_cov @ whiten.T
    b_prime = 0.5 * (b_prime + b_prime.T)
    b_val, b_vec = jacobi_eigh(b_prime)
    if b_val[-1] <= _PD_REL_TOL * b_val[0]:
        raise ValueError(
            "between_cov is not positive definite "
            f"(smallest eigenvalue {float(b_val[-1]):.6g})"
        )
    matrix = b_vec.T @ whiten
    # |det T| = prod(w_val)^(-1/2); the rotation contributes +-1
    log_abs_det = -0.5 * float(np.sum(np.log(w_val)))
    canonical = CanonicalModel(model.dim, b_val, 1.0)
    transform = LinearTransform(matrix, model.global_mean, log_abs_det)
    return canonical, transform


def apply_transform(t: LinearTransform, x) -> np.ndarray:
    """matrix @ (x - offset)."""
    v = _as_vector(x, t.dim)
    return t.matrix @ (v - t.offset)


def apply_inverse(t: LinearTransform, y) -> np.ndarray:
    """Inverse of apply_transform."""
    v = _as_vector(y, t.dim, "y")
    return np.linalg.solve(t.matrix, v) + t.offset


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


def _diag_logpdf(x: np.ndarray, mean, var: np.ndarray) -> float:
    """log N(x; mean, diag(var)); one shared evaluation path so identities
    that are exact in theory stay exact in floating point."""
    delta = x - mean
    return -0.5 * (
        float(np.sum(np.log(2.0 * np.pi * var)))
        + float(np.sum(delta * delta / var))
    )


def prior_log_density(model: CanonicalModel, mu) -> float:
    """log density of a class mean under the between-class prior."""
    v = _as_vector(mu, model.dim, "mu")
    return _diag_logpdf(v, 0.0, model.between_var)


def conditional_log_density(model: CanonicalModel, mu, x) -> float:
    """log density of an observation given its class mean."""
    m = _as_vector(mu, model.dim, "mu")
    v = _as_vector(x, model.dim)
    delta = v - m
    return -0.5 * (
        model.dim * math.log(2.0 * math.pi * model.within_var)
        + float(np.sum(delta * delta)) / model.within_var
    )


def marginal_log_density(model: CanonicalModel, x) -> float:
    """log density of an observation with the class mean integrated out."""
    v = _as_vector(x, model.dim)
    return _diag_logpdf(v, 0.0, model.between_var + model.within_var)


def posterior(model: CanonicalModel, samples, class_id: str = "") -> Enrollment:
    """Posterior over a class mean from enrollment samples (possibly none)."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, model.dim)
    if arr.ndim != 2 or arr.shape[1] != model.dim:
        raise ValueError(
            f"samples must have shape (n, {model.dim}), got {arr.shape}"
        )
    n = arr.shape[0]
    if n == 0:
        # exact prior recovery, bypassing the n-dependent arithmetic
        return Enrollment(
            class_id=class_id,
            n=0,
            sample_mean=np.zeros(model.dim),
            shrunk_mean=np.zeros(model.dim),
            posterior_var=model.between_var.copy(),
        )
    sample_mean = arr.mean(axis=0)
    denom = n * model.between_var + model.within_var
    shrinkage = n * model.between_var / denom
    return Enrollment(
        class_id=class_id,
        n=n,
        sample_mean=sample_mean,
        shrunk_mean=shrinkage * sample_mean,
        posterior_var=model.within_var * model.between_var / denom,
    )


def posterior_log_density(model: CanonicalModel, enrollment: Enrollment, mu) -> float:
    """log density of a candidate class mean under an enrollment posterior."""
    v = _as_vector(mu, model.dim, "mu")
    if enrollment.dim != model.dim:
        raise ValueError("enrollment dimension does not match the model")
    return _diag_logpdf(v, enrollment.shrunk_mean, enrollment.posterior_var)


def predictive_log_density(model: CanonicalModel, enrollment: Enrollment, x) -> float:
    """log density of a new observation for an enrolled class, with the
    remaining mean uncertainty folded into the variance."""
    v = _as_vector(x, model.dim)
    if enrollment.dim != model.dim:
        raise ValueError("enrollment dimension does not match the model")
    return _diag_logpdf(
        v, enrollment.shrunk_mean, model.within_var + enrollment.posterior_var
    )


# ---------------------------------------------------------------------------
# serialization (JSON)
# ---------------------------------------------------------------------------

_CANONICAL_FIELDS = {"dim", "between_var", "within_var"}
_GENERAL_FIELDS = _CANONICAL_FIELDS | {"global_mean", "between_cov", "within_cov"}


def model_to_dict(model) -> dict:
    """Flat JSON-ready document. General models carry their covariances
    (row-major) plus the canonical summary for interop and integrity checks."""
    if isinstance(model, CanonicalModel):
        return {
            "dim": model.dim,
            "between_var": model.between_var.tolist(),
            "within_var": model.within_var,
        }
    if isinstance(model, GeneralModel):
        canonical, _ = canonicalize(model)
        return {
            "dim": model.dim,
            "between_var": canonical.between_var.tolist(),
            "within_var": canonical.within_var,
            "global_mean": model.global_mean.tolist(),
            "between_cov": model.between_cov.ravel().tolist(),
            "within_cov": model.within_cov.ravel().tolist(),
        }
    raise TypeError(f"cannot serialize {type(model)!r}")


def model_from_dict(doc: dict):
    """Inverse of model_to_dict. Unknown fields are rejected."""
    if not isinstance(doc, dict):
        raise ValueError("model document must be a JSON object")
    unknown = set(doc) - _GENERAL_FIELDS
    if unknown:
        raise ValueError(f"unknown model fields: {sorted(unknown)}")
    missing = _CANONICAL_FIELDS - set(doc)
    if missing:
        raise ValueError(f"missing model fields: {sorted(missing)}")
    dim = int(doc["dim"])
    general_keys = {"between_cov", "within_cov"} & set(doc)
    if general_keys:
        if general_keys != {"between_cov", "within_cov"}:
            raise ValueError("between_cov and within_cov must be given together")
        mean = np.asarray(doc.get("global_mean", np.zeros(dim)), dtype=np.float64)
        model = GeneralModel(
            dim=dim,
            global_mean=mean,
            between_cov=np.asarray(doc["between_cov"], dtype=np.float64).reshape(
                dim, dim
            ),
            within_cov=np.asarray(doc["within_cov"], dtype=np.float64).reshape(
                dim, dim
            ),
        )
        canonical, _ = canonicalize(model)
        stored = np.asarray(doc["between_var"], dtype=np.float64)
        if stored.shape != (dim,) or not np.allclose(
            stored, canonical.between_var, rtol=1e-6, atol=1e-9
        ):
            raise ValueError(
                "stored between_var does not match the canonicalized covariances"
            )
        if abs(float(doc["within_var"]) - canonical.within_var) > 1e-6:
            raise ValueError(
                "stored within_var does not match the canonicalized covariances"
            )
        return model
    if "global_mean" in doc:
        raise ValueError("global_mean requires between_cov and within_cov")
    return CanonicalModel(
        dim=dim,
        between_var=np.asarray(doc["between_var"], dtype=np.float64),
        within_var=float(doc["within_var"]),
    )


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
