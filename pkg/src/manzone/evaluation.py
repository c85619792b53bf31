"""Partition agreement, leave-one-week-out stability, G selection and feature influence."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import COLUMNS, FeatureVector, sort_key
from .gmm import FitConfig, GmmFitError, GmmModel, fit

log = logging.getLogger(__name__)

MAN = "MAN"
ZONE = "ZONE"
REFERENCE_FEATURE = "SNAP_TO_THROW__RAT_MEAN"
CV_RESTARTS = 3


class AriUndefined(ValueError):
    """The adjusted Rand index denominator vanished for non-identical partitions."""


# --- partitions and pair counts ---------------------------------------------------


@dataclass(frozen=True)
class Partition:
    ids: tuple
    labels: np.ndarray

    @classmethod
    def from_labels(cls, labels: Sequence, ids: Sequence | None = None) -> "Partition":
        """Relabel to dense integers 0..L-1 in order of first appearance."""
        labels = list(labels)
        ids = tuple(ids) if ids is not None else tuple(range(len(labels)))
        if len(ids) != len(labels):
            raise ValueError("ids and labels differ in length")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in partition")
        code: dict = {}
        dense = np.array([code.setdefault(lab, len(code)) for lab in labels], dtype=np.int64)
        return cls(ids, dense)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self) -> int:
        return len(self.ids)

    def aligned_to(self, ids: Sequence) -> np.ndarray:
        """Labels reordered to follow ``ids``; the id sets must match."""
        if tuple(ids) == self.ids:
            return self.labels
        if set(ids) != set(self.ids) or len(ids) != len(self.ids):
            raise ValueError("partitions cover different id sets")
        pos = {k: i for i, k in enumerate(self.ids)}
        return self.labels[[pos[k] for k in ids]]


@dataclass(frozen=True)
class PairCounts:
    a: int  # same cluster in both
    b: int  # same in first, different in second
    c: int  # different in first, same in second
    d: int  # different in both

    @property
    def n_pairs(self) -> int:
        return self.a + self.b + self.c + self.d


def _as_partition(p) -> Partition:
    return p if isinstance(p, Partition) else Partition.from_labels(p)


def _pairs(counts: np.ndarray) -> int:
    counts = counts.astype(object)  # exact integer arithmetic
    return int(sum(c * (c - 1) // 2 for c in counts))


def pair_counts(p, q) -> PairCounts:
    p, q = _as_partition(p), _as_partition(q)
    q_labels = q.aligned_to(p.ids)
    n = len(p)
    if n == 0:
        return PairCounts(0, 0, 0, 0)
    table = np.zeros((p.n_clusters, int(q_labels.max()) + 1), dtype=np.int64)
    np.add.at(table, (p.labels, q_labels), 1)
    a = _pairs(table.ravel())
    same_p = _pairs(table.sum(axis=1))
    same_q = _pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    b = same_p - a
    c = same_q - a
    return PairCounts(a, b, c, total - a - b - c)


def rand_index(counts: PairCounts) -> float:
    if counts.n_pairs == 0:
        raise ValueError("Rand index undefined with no pairs")
    return (counts.a + counts.d) / counts.n_pairs


def adjusted_rand_index(counts: PairCounts) -> float:
    a, b, c, d = counts.a, counts.b, counts.c, counts.d
    n = a + b + c + d
    if n == 0:
        raise ValueError("ARI undefined with no pairs")
    expected = (a + b) * (a + c) + (c + d) * (b + d)
    num = n * (a + d) - expected
    den = n * n - expected
    if den == 0:
        if b == 0 and c == 0:
            return 1.0
        raise AriUndefined("ARI undefined: zero denominator for non-identical partitions")
    return num / den


def ari(p, q) -> float:
    return adjusted_rand_index(pair_counts(p, q))


# --- feature tables ---------------------------------------------------------------


@dataclass(frozen=True)
class FeatureTable:
    """Row-aligned ids, weeks and feature matrix (NaN marks missing)."""

    ids: tuple
    weeks: np.ndarray
    values: np.ndarray
    names: tuple[str, ...]

    @classmethod
    def from_vectors(cls, vectors: Iterable[FeatureVector], names: Sequence[str] | None = None) -> "FeatureTable":
        vectors = list(vectors)
        names = COLUMNS if names is None else names
        values = np.array([np.where(v.missing_mask, np.nan, v.values) for v in vectors], dtype=float)
        values = values.reshape(len(vectors), len(names))
        return cls(
            tuple(v.key for v in vectors),
            np.array([v.week for v in vectors], dtype=np.int64),
            values,
            tuple(names),
        )

    def __len__(self) -> int:
        return len(self.ids)

    def canonical(self) -> "FeatureTable":
        order = sorted(range(len(self)), key=lambda i: (self.weeks[i], sort_key(self.ids[i])))
        return self.rows(np.array(order, dtype=np.int64))

    def rows(self, index) -> "FeatureTable":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return FeatureTable(tuple(self.ids[i] for i in index), self.weeks[index], self.values[index], self.names)

    def columns(self, names: Sequence[str]) -> "FeatureTable":
        idx = [self.names.index(n) for n in names]
        return FeatureTable(self.ids, self.weeks, self.values[:, idx], tuple(names))

    def drop(self, names: Iterable[str]) -> "FeatureTable":
        gone = set(names)
        return self.columns([n for n in self.names if n not in gone])

    def with_column(self, name: str, values: np.ndarray) -> "FeatureTable":
        return FeatureTable(self.ids, self.weeks, np.column_stack([self.values, values]), (*self.names, name))


def impute_column_means(values: np.ndarray) -> np.ndarray:
    """Replace NaN by the column mean of the observed entries (0 for all-missing columns)."""
    if not np.isnan(values).any():
        return values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        means = np.nanmean(values, axis=0)
    means = np.where(np.isnan(means), 0.0, means)
    return np.where(np.isnan(values), means, values)


def fit_table(table: FeatureTable, config: FitConfig) -> GmmModel:
    return fit(impute_column_means(table.values), config, feature_names=table.names)


def predict_table(model: GmmModel, table: FeatureTable) -> np.ndarray:
    return model.predict_proba(model.impute(table.values))


# --- leave-one-week-out CV ------------------------------------------------------


def fold_seed(base_seed: int, n_components: int, week: int, ablation: int = -1) -> int:
    """Seed for one CV fit, fixed by (base seed, G, held-out week, ablated column)."""
    ss = np.random.SeedSequence([int(base_seed), int(n_components), int(week), int(ablation) + 1])
    return int(ss.generate_state(1)[0])


@dataclass
class CvRow:
    n_components: int
    week_ari: dict[int, float]
    skipped: dict[int, str] = field(default_factory=dict)

    @property
    def mean_ari(self) -> float:
        if not self.week_ari:
            return float("nan")
        return float(np.mean(list(self.week_ari.values())))


@dataclass
class CvReport:
    rows: list[CvRow]
    best_g: int

    def mean_ari(self, n_components: int) -> float:
        for r in self.rows:
            if r.n_components == n_components:
                return r.mean_ari
        raise KeyError(n_components)

    @property
    def weeks(self) -> list[int]:
        return sorted({w for r in self.rows for w in (*r.week_ari, *r.skipped)})


def _as_table(data) -> FeatureTable:
    return data if isinstance(data, FeatureTable) else FeatureTable.from_vectors(data)


def lowo_cv_ari(data, n_components: int, config: FitConfig | None = None, ablation: int = -1) -> CvRow:
    """Leave-one-week-out agreement between a model fit without week k and one fit on week k alone.

    Both models label the held-out week's rows; ARI of the two partitions is recorded per week.
    """
    config = config or FitConfig(n_restarts=CV_RESTARTS)
    table = _as_table(data).canonical()
    weeks = sorted(set(table.weeks.tolist()))
    if len(weeks) < 2:
        raise ValueError("need >= 2 weeks for leave-one-week-out CV")
    row = CvRow(n_components, {})
    for k in weeks:
        held = table.weeks == k
        train, test = table.rows(~held), table.rows(held)
        if len(test) <= n_components:
            row.skipped[k] = f"week {k} has {len(test)} rows, need > {n_components}"
            continue
        if len(train) <= n_components:
            row.skipped[k] = f"training weeks have {len(train)} rows, need > {n_components}"
            continue
        cfg = config.replace(n_components=n_components, rng_seed=fold_seed(config.rng_seed, n_components, k, ablation))
        try:
            train_model = fit_table(train, cfg)
            test_model = fit_table(test, cfg)
        except GmmFitError as exc:
            row.skipped[k] = f"fit failed: {exc}"
            continue
        p_train = np.argmax(predict_table(train_model, test), axis=1)
        p_test = np.argmax(predict_table(test_model, test), axis=1)
        try:
            row.week_ari[k] = ari(p_train, p_test)
        except AriUndefined as exc:
            row.skipped[k] = str(exc)
    for k, why in row.skipped.items():
        log.warning("G=%d: skipped week %s (%s)", n_components, k, why)
    return row


def select_g(data, g_values: Iterable[int] = range(2, 10), config: FitConfig | None = None) -> CvReport:
    g_values = sorted(set(g_values))
    if not g_values:
        raise ValueError("empty G range")
    table = _as_table(data)
    rows = [lowo_cv_ari(table, g, config) for g in g_values]
    best = None
    for r in rows:  # ascending G, strict improvement only: ties keep the smaller G
        if np.isfinite(r.mean_ari) and (best is None or r.mean_ari > best.mean_ari):
            best = r
    if best is None:
        raise ValueError("no G produced a defined average ARI")
    return CvReport(rows, best.n_components)


# --- feature influence ------------------------------------------------------------


@dataclass(frozen=True)
class InfluenceEntry:
    feature: str
    influence: float
    mean_ari_without: float
    columns: tuple[str, ...]


@dataclass
class InfluenceReport:
    n_components: int
    baseline: float
    mode: str
    entries: list[InfluenceEntry]  # ranked, most influential first

    def top(self, k: int = 9) -> list[InfluenceEntry]:
        return self.entries[:k]


def feature_family(column: str) -> str:
    return column.split("__", 1)[1] if "__" in column else column


def feature_influence(
    data,
    n_components: int,
    config: FitConfig | None = None,
    mode: str = "column",
) -> InfluenceReport:
    """Drop in average LOWO-CV ARI when each column (or feature family) is removed."""
    if mode not in ("column", "family"):
        raise ValueError("mode must be 'column' or 'family'")
    table = _as_table(data)
    if len(table.names) < 2:
        raise ValueError("need >= 2 features")
    baseline = lowo_cv_ari(table, n_components, config).mean_ari
    if mode == "column":
        groups = [(name, (name,)) for name in table.names]
    else:
        order: dict[str, list[str]] = {}
        for name in table.names:
            order.setdefault(feature_family(name), []).append(name)
        groups = [(fam, tuple(cols)) for fam, cols in order.items()]
    entries = []
    for m, (label, cols) in enumerate(groups):
        reduced = table.drop(cols)
        if not reduced.names:
            continue
        without = lowo_cv_ari(reduced, n_components, config, ablation=m).mean_ari
        entries.append(InfluenceEntry(label, baseline - without, without, cols))
    entries.sort(key=lambda e: -e.influence)
    return InfluenceReport(n_components, baseline, mode, entries)


# --- man / zone semantics ---------------------------------------------------------


@dataclass(frozen=True)
class SemanticLabels:
    mapping: dict[int, str]
    status: str  # "heuristic", "override", "ambiguous", "no-semantics"
    reference_feature: str | None = None
    margin: float | None = None

    def label(self, component: int) -> str:
        return self.mapping[component]

    def component_for(self, label: str) -> int | None:
        for g, lab in self.mapping.items():
            if lab == label:
                return g
        return None

    def as_metadata(self) -> dict:
        return {
            "semantic_labels": {str(g): lab for g, lab in sorted(self.mapping.items())},
            "semantic_status": self.status,
            "semantic_rule": "lower de-standardized mean of reference feature -> MAN",
            "semantic_reference": self.reference_feature,
            "semantic_margin": self.margin,
        }

    @classmethod
    def from_metadata(cls, meta: Mapping) -> "SemanticLabels | None":
        if "semantic_labels" not in meta:
            return None
        return cls(
            {int(g): lab for g, lab in meta["semantic_labels"].items()},
            meta.get("semantic_status", "heuristic"),
            meta.get("semantic_reference"),
            meta.get("semantic_margin"),
        )


def _reference_feature(names: Sequence[str]) -> str | None:
    if REFERENCE_FEATURE in names:
        return REFERENCE_FEATURE
    candidates = [n for n in names if feature_family(n) == "RAT_MEAN"]
    return candidates[0] if len(candidates) == 1 else None


def semantic_labels(
    model: GmmModel,
    feature_names: Sequence[str] | None = None,
    override: Mapping[int, str] | None = None,
    reference: str | None = None,
    tie_tolerance: float = 1e-6,
) -> SemanticLabels:
    """Name the two clusters: the one whose cornerbacks sit relatively closer to their receiver is MAN."""
    names = tuple(feature_names) if feature_names is not None else model.feature_names
    generic = {g: f"CLUSTER_{g}" for g in range(model.n_components)}
    if override:
        mapping = {int(g): str(lab).upper() for g, lab in override.items()}
        if set(mapping) != set(range(model.n_components)):
            raise ValueError("override must name every component")
        log.info("semantic labels overridden manually: %s", mapping)
        return SemanticLabels(mapping, "override", reference)
    if model.n_components != 2:
        return SemanticLabels(generic, "no-semantics")
    reference = reference or _reference_feature(names)
    if reference is None or reference not in names:
        raise ValueError("a RAT_MEAN column is required to name clusters")
    col = names.index(reference)
    means = model.raw_means[:, col]
    margin = float(abs(means[0] - means[1]))
    if margin <= tie_tolerance:
        return SemanticLabels(generic, "ambiguous", reference, margin)
    man = int(np.argmin(means))
    return SemanticLabels({man: MAN, 1 - man: ZONE}, "heuristic", reference, margin)


def label_model(model: GmmModel, **kwargs) -> GmmModel:
    return model.with_metadata(**semantic_labels(model, **kwargs).as_metadata())


def model_semantics(model: GmmModel) -> SemanticLabels | None:
    return SemanticLabels.from_metadata(model.metadata)
