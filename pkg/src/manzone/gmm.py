"""Gaussian mixtures with unconstrained full covariances, fitted by EM.

Columns are z-scored before fitting; the fitted parameters live in that
standardized space and ``raw_means`` / ``raw_covariances`` map them back.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, solve_triangular
from scipy.special import logsumexp

log = logging.getLogger(__name__)

FORMAT_NAME = "manzone-gmm"
FORMAT_VERSION = 1

_LOG_2PI = np.log(2.0 * np.pi)
SEED_TRIALS = 5  # k-means++ draws per restart; the tightest Lloyd solution seeds EM
MIN_COMPONENT_MASS = 2.0
MAX_RESEEDS = 20


class GmmFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    n_components: int = 2
    max_iterations: int = 500
    tolerance: float = 1e-6  # relative log-likelihood change
    n_restarts: int = 10
    reg_floor: float = 1e-6
    rng_seed: int = 2017

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.reg_floor < 0:
            raise ValueError("reg_floor must be >= 0")

    def replace(self, **changes) -> "FitConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Standardizer":
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray  # (G,)
    means: np.ndarray  # (G, d), standardized space
    covariances: np.ndarray  # (G, d, d), standardized space
    standardizer: Standardizer
    log_likelihood: float
    n_iterations: int
    converged: bool
    reg_floor: float
    feature_names: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)
    # per-restart EM traces; not persisted
    traces: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    @property
    def raw_means(self) -> np.ndarray:
        return self.means * self.standardizer.scale + self.standardizer.mean

    @property
    def raw_covariances(self) -> np.ndarray:
        s = self.standardizer.scale
        return self.covariances * np.outer(s, s)

    def impute(self, data: np.ndarray) -> np.ndarray:
        """Fill NaN entries with the training column means."""
        data = np.array(data, dtype=float)
        return np.where(np.isnan(data), self.standardizer.mean, data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GmmModel):
            return NotImplemented
        arrays = ("weights", "means", "covariances")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and np.array_equal(self.standardizer.mean, other.standardizer.mean)
            and np.array_equal(self.standardizer.scale, other.standardizer.scale)
            and (self.log_likelihood, self.n_iterations, self.converged, self.reg_floor, self.feature_names)
            == (other.log_likelihood, other.n_iterations, other.converged, other.reg_floor, other.feature_names)
            and self.metadata == other.metadata
        )

    def with_metadata(self, **items) -> "GmmModel":
        return dataclasses.replace(self, metadata={**self.metadata, **items})

    def predict_proba(self, data: np.ndarray) -> np.ndarray:
        return predict_proba(self, data)

    def assign_labels(self, data: np.ndarray) -> np.ndarray:
        return assign_labels(self, data)

    def score(self, data: np.ndarray) -> float:
        return log_likelihood(self, data)


# --- numerics -----------------------------------------------------------------


def _component_log_density(z: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """log N(z | mean_g, cov_g) for every row and component, shape (n, G)."""
    n, d = z.shape
    out = np.empty((n, len(means)))
    for g in range(len(means)):
        chol, _ = cho_factor(covs[g], lower=True, check_finite=False)
        y = solve_triangular(chol, (z - means[g]).T, lower=True, check_finite=False)
        half_logdet = np.log(np.diag(chol)).sum()
        out[:, g] = -0.5 * (d * _LOG_2PI + np.einsum("ij,ij->j", y, y)) - half_logdet
    return out


def _weighted_log_density(z, weights, means, covs):
    with np.errstate(divide="ignore"):
        return _component_log_density(z, means, covs) + np.log(weights)


def _m_step(z, resp, reg):
    n, d = z.shape
    mass = resp.sum(axis=0)
    weights = mass / n
    means = (resp.T @ z) / mass[:, None]
    covs = np.empty((len(mass), d, d))
    for g in range(len(mass)):
        diff = z - means[g]
        covs[g] = (resp[:, g, None] * diff).T @ diff / mass[g]
        covs[g] = _floor_eigenvalues(0.5 * (covs[g] + covs[g].T), reg)
    return weights, means, covs


def _floor_eigenvalues(cov: np.ndarray, reg: float) -> np.ndarray:
    """Raise eigenvalues below ``reg`` to ``reg``, keeping the eigenvectors.

    This is the exact maximizer of the M-step objective under the constraint
    that every eigenvalue is at least ``reg``, so EM stays monotone.
    """
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= reg:
        return cov
    out = (vecs * np.maximum(vals, reg)) @ vecs.T
    return 0.5 * (out + out.T)


def _kmeanspp(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(z)
    centers = [z[rng.integers(n)]]
    d2 = ((z - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers.append(z[idx])
        d2 = np.minimum(d2, ((z - z[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _seed_means(z: np.ndarray, k: int, rng: np.random.Generator, trials: int = SEED_TRIALS) -> np.ndarray:
    """Best (lowest within-cluster sum of squares) of several k-means++ + Lloyd runs."""
    best, best_sse = None, np.inf
    for _ in range(trials):
        labels = _lloyd(z, _kmeanspp(z, k, rng))
        centers = np.array([z[labels == g].mean(axis=0) if np.any(labels == g) else z[rng.integers(len(z))] for g in range(k)])
        sse = float(((z - centers[labels]) ** 2).sum())
        if sse < best_sse:
            best, best_sse = centers, sse
    return best


@dataclass
class _Run:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    log_likelihood: float
    n_iterations: int
    converged: bool
    trace: list = field(default_factory=list)  # (iteration, log-likelihood, reseeded)


def _lloyd(z: np.ndarray, centers: np.ndarray, n_iter: int = 30) -> np.ndarray:
    """Hard k-means refinement of the seeds; returns cluster labels."""
    labels = None
    for _ in range(n_iter):
        d2 = ((z[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for g in range(len(centers)):
            members = z[labels == g]
            if len(members):
                centers[g] = members.mean(axis=0)
    return labels


def _em(z, init_means, config, rng) -> _Run:
    n, d = z.shape
    k = len(init_means)
    base_cov = _floor_eigenvalues(np.atleast_2d(np.cov(z, rowvar=False, bias=True)), config.reg_floor)
    labels = _lloyd(z, np.array(init_means, dtype=float))
    counts = np.bincount(labels, minlength=k)
    if counts.min() >= MIN_COMPONENT_MASS:
        weights, means, covs = _m_step(z, np.eye(k)[labels], config.reg_floor)
    else:
        weights = np.full(k, 1.0 / k)
        means = np.array(init_means, dtype=float)
        covs = np.repeat(base_cov[None], k, axis=0)

    trace = []
    reseeds = 0
    reseeded = False
    prev = -np.inf
    converged = False
    it = 0
    while True:
        logp = _weighted_log_density(z, weights, means, covs)
        norm = logsumexp(logp, axis=1)
        ll = float(norm.sum())
        trace.append((it, ll, reseeded))
        if it >= 1 and not reseeded and abs(ll - prev) <= config.tolerance * abs(prev):
            converged = True
            break
        if it >= config.max_iterations:
            break
        resp = np.exp(logp - norm[:, None])
        mass = resp.sum(axis=0)
        weak = np.flatnonzero(mass < MIN_COMPONENT_MASS)
        reseeded = False
        if len(weak):
            reseeds += 1
            if reseeds > MAX_RESEEDS:
                raise GmmFitError("components keep collapsing")
            for g in weak:
                means[g] = z[rng.integers(n)]
                covs[g] = base_cov
            weights = np.where(np.isin(np.arange(k), weak), 1.0 / k, weights)
            weights = weights / weights.sum()
            reseeded = True
            prev = -np.inf
            continue
        weights, means, covs = _m_step(z, resp, config.reg_floor)
        prev = ll
        it += 1
    return _Run(weights, means, covs, ll, it, converged, trace)


def fit(
    data: np.ndarray,
    config: FitConfig | None = None,
    feature_names=None,
    init_means: np.ndarray | None = None,
) -> GmmModel:
    """Fit a full-covariance Gaussian mixture by EM with k-means++ seeding.

    ``init_means`` (standardized space, shape (G, d)) replaces the seeding for
    every restart; mainly useful for tests.
    """
    config = config or FitConfig()
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n, d = data.shape
    k = config.n_components
    if d < 1:
        raise ValueError("data needs at least one column")
    if n <= k:
        raise ValueError(f"need more rows than components (n={n}, G={k})")
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")

    std = Standardizer.fit(data)
    z = std.transform(data)
    rng = np.random.default_rng(config.rng_seed)
    seeds = rng.spawn(config.n_restarts)

    best: _Run | None = None
    traces = []
    failures = 0
    for r in range(config.n_restarts):
        run_rng = seeds[r]
        start = np.asarray(init_means, dtype=float) if init_means is not None else _seed_means(z, k, run_rng)
        try:
            run = _em(z, start, config, run_rng)
        except (GmmFitError, np.linalg.LinAlgError) as exc:
            log.debug("restart %d failed: %s", r, exc)
            failures += 1
            traces.append(())
            continue
        traces.append(tuple(run.trace))
        if best is None or run.log_likelihood > best.log_likelihood:
            best = run
    if best is None:
        raise GmmFitError(
            f"all {config.n_restarts} restarts collapsed (a component kept fewer than "
            f"{MIN_COMPONENT_MASS:g} effective points); increase reg_floor or reduce G"
        )
    # report likelihoods in raw units: the z-scoring contributes -sum(log scale) per row
    shift = n * float(np.log(std.scale).sum())
    traces = [tuple((i, ll - shift, r) for i, ll, r in t) for t in traces]
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    if len(names) != d:
        raise ValueError("feature_names length does not match data columns")
    model = GmmModel(
        weights=best.weights,
        means=best.means,
        covariances=best.covs,
        standardizer=std,
        log_likelihood=best.log_likelihood - shift,
        n_iterations=best.n_iterations,
        converged=best.converged,
        reg_floor=config.reg_floor,
        feature_names=names,
        metadata={"n_restarts": config.n_restarts, "failed_restarts": failures, "rng_seed": config.rng_seed},
        traces=tuple(traces),
    )
    return model


def _prepare(model: GmmModel, data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if model.n_features > 1 or x.size == 1 else x[:, None]
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns, got {x.shape[1]}")
    return model.standardizer.transform(x)


def _joint_log_density(model: GmmModel, data) -> np.ndarray:
    return _weighted_log_density(_prepare(model, data), model.weights, model.means, model.covariances)


def predict_proba(model: GmmModel, data) -> np.ndarray:
    """Posterior component probabilities; a single vector gives a 1-D result."""
    single = np.ndim(data) == 1 and model.n_features == np.size(data)
    logp = _joint_log_density(model, data)
    proba = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    proba /= proba.sum(axis=1, keepdims=True)
    return proba[0] if single else proba


def assign_labels(model: GmmModel, data) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lower component on ties
    return np.argmax(np.atleast_2d(predict_proba(model, data)), axis=1)


def log_likelihood(model: GmmModel, data) -> float:
    """Total log-density of ``data`` under the model, in raw feature units."""
    logp = _joint_log_density(model, data)
    return float(logsumexp(logp, axis=1).sum() - len(logp) * np.log(model.standardizer.scale).sum())


# --- persistence ----------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def model_to_dict(model: GmmModel) -> dict:
    g, d = model.means.shape
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n_components": g,
        "n_features": d,
        "feature_names": list(model.feature_names),
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covariances": [c.ravel().tolist() for c in model.covariances],  # row-major
        "standardizer": {"mean": model.standardizer.mean.tolist(), "scale": model.standardizer.scale.tolist()},
        "fit": {
            "log_likelihood": model.log_likelihood,
            "n_iterations": model.n_iterations,
            "converged": model.converged,
            "reg_floor": model.reg_floor,
        },
        "metadata": _jsonable(model.metadata),
    }


def model_from_dict(doc: dict) -> GmmModel:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r} (expected {FORMAT_VERSION})")
    g, d = doc["n_components"], doc["n_features"]
    return GmmModel(
        weights=np.array(doc["weights"], dtype=float),
        means=np.array(doc["means"], dtype=float).reshape(g, d),
        covariances=np.array(doc["covariances"], dtype=float).reshape(g, d, d),
        standardizer=Standardizer(np.array(doc["standardizer"]["mean"]), np.array(doc["standardizer"]["scale"])),
        log_likelihood=doc["fit"]["log_likelihood"],
        n_iterations=doc["fit"]["n_iterations"],
        converged=doc["fit"]["converged"],
        reg_floor=doc["fit"]["reg_floor"],
        feature_names=tuple(doc["feature_names"]),
        metadata=doc.get("metadata", {}),
    )


def save_model(model: GmmModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> GmmModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
