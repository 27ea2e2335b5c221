"""Activity groups from k-means on the consistency x intensity product.

The distance between two users is the absolute difference of their
consistency-intensity products, so the 2-D (C, I) problem is exactly a 1-D
k-means on ``x = C' * I'`` where ``C' = C / C_max + 1`` and
``I' = I / I_max + 1`` after dropping users above the trim percentile.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_profile_array
from .metrics import ActivityProfile, profiles_matrix
from .types import Group, Tier

MIN_PROFILES = 10
MODEL_FORMAT_VERSION = 1


def product_distance(a, b) -> np.ndarray:
    """``|C_a * I_a - C_b * I_b|`` for (consistency, intensity) pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a[..., 0] * a[..., 1] - b[..., 0] * b[..., 1])


@dataclass
class TrimReport:
    n_input: int
    n_inactive: int
    n_trimmed: int
    consistency_threshold: float
    intensity_threshold: float
    trimmed_max_intensity: float | None


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    n_iter: int
    converged: bool
    abs_inertia: list
    sq_inertia: list


def _nearest(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # centroids ascending, argmin returns the first minimum -> ties go to the lower one
    return np.argmin(np.abs(x[:, None] - centroids[None, :]), axis=1)


def farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded farthest-point initialisation over the distinct point values."""
    values = np.unique(x)
    if values.size < k:
        raise ValueError(f"need at least {k} distinct point values, got {values.size}")
    chosen = [values[rng.integers(values.size)]]
    gap = np.abs(values - chosen[0])
    for _ in range(1, k):
        nxt = values[int(np.argmax(gap))]
        chosen.append(nxt)
        gap = np.minimum(gap, np.abs(values - nxt))
    return np.sort(np.asarray(chosen))


def kmeans_1d(x, k: int = 3, seed: int = 42, max_iter: int = 100, update: str = "mean") -> KMeansResult:
    """Lloyd iterations on scalar points with absolute-difference distance."""
    if update not in ("mean", "median"):
        raise ValueError(f"update must be 'mean' or 'median', got {update!r}")
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    centroids = farthest_point_init(x, k, rng)
    labels = _nearest(x, centroids)
    abs_hist = [float(np.abs(x - centroids[labels]).sum())]
    sq_hist = [float(((x - centroids[labels]) ** 2).sum())]
    center = np.mean if update == "mean" else np.median
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = centroids.copy()
        for j in range(k):
            members = x[labels == j]
            if members.size:
                new[j] = center(members)
        centroids = np.sort(new)
        new_labels = _nearest(x, centroids)
        # inertia recorded before and after every assignment step
        abs_hist.append(float(np.abs(x - centroids[labels]).sum()))
        sq_hist.append(float(((x - centroids[labels]) ** 2).sum()))
        abs_hist.append(float(np.abs(x - centroids[new_labels]).sum()))
        sq_hist.append(float(((x - centroids[new_labels]) ** 2).sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return KMeansResult(centroids, labels, n_iter, converged, abs_hist, sq_hist)


class ActivityGroupModel(ClusterMixin, TransformerMixin, BaseEstimator):
    """Three activity groups (Low/Medium/High) over (consistency, intensity).

    Parameters
    ----------
    n_clusters : int
        Number of groups; labels are ``Group`` members when this is 3.
    trim_percentile : float
        Users whose consistency or intensity exceeds this percentile are
        excluded from the fit (their values are clamped at prediction time).
    max_iter : int
    update : {"mean", "median"}
        Centroid update rule.
    random_state : int
        Seed of the farthest-point initialisation.
    """

    def __init__(self, n_clusters=3, trim_percentile=99.9, max_iter=100, update="mean", random_state=42):
        self.n_clusters = n_clusters
        self.trim_percentile = trim_percentile
        self.max_iter = max_iter
        self.update = update
        self.random_state = random_state

    def _preprocess(self, X):
        C, I = X[:, 0], X[:, 1]
        active = I > 0
        if not active.any():
            raise ValueError("no active users")
        if active.sum() < MIN_PROFILES:
            raise ValueError(f"need at least {MIN_PROFILES} active profiles, got {int(active.sum())}")
        c_trim = float(np.percentile(C[active], self.trim_percentile))
        i_trim = float(np.percentile(I[active], self.trim_percentile))
        retained = active & (C <= c_trim) & (I <= i_trim)
        trimmed = active & ~retained
        report = TrimReport(
            n_input=len(X),
            n_inactive=int((~active).sum()),
            n_trimmed=int(trimmed.sum()),
            consistency_threshold=c_trim,
            intensity_threshold=i_trim,
            trimmed_max_intensity=float(I[trimmed].max()) if trimmed.any() else None,
        )
        return retained, report

    def fit(self, X, y=None):
        X = check_profile_array(X)
        k = check_positive_int(self.n_clusters, "n_clusters")
        check_positive_int(self.max_iter, "max_iter")
        if not 0 < self.trim_percentile <= 100:
            raise ValueError("trim_percentile must lie in (0, 100]")
        retained, report = self._preprocess(X)
        self.c_trim_ = report.consistency_threshold
        self.i_trim_ = report.intensity_threshold
        kept = X[retained]
        self.c_max_ = float(kept[:, 0].max()) or 1.0
        self.i_max_ = float(kept[:, 1].max()) or 1.0
        points = self._points(kept)
        res = kmeans_1d(points, k, self.random_state, self.max_iter, self.update)
        if np.any(np.diff(res.centroids) <= 0):
            raise ValueError("degenerate fit: centroids are not strictly ascending")
        self.centroids_ = res.centroids
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.inertia_history_ = res.abs_inertia
        self.sq_inertia_history_ = res.sq_inertia
        self.inertia_ = res.abs_inertia[-1]
        self.retained_mask_ = retained
        self.trim_report_ = report
        self.labels_ = self.predict(X)
        return self

    def _points(self, X) -> np.ndarray:
        return (X[:, 0] / self.c_max_ + 1.0) * (X[:, 1] / self.i_max_ + 1.0)

    def points(self, X) -> np.ndarray:
        """Position on the normalised product scale, after trim clamping."""
        check_is_fitted(self, "centroids_")
        X = check_profile_array(X).copy()
        np.minimum(X[:, 0], self.c_trim_, out=X[:, 0])
        np.minimum(X[:, 1], self.i_trim_, out=X[:, 1])
        return self._points(X)

    def predict(self, X) -> np.ndarray:
        return _nearest(self.points(X), self.centroids_)

    def transform(self, X) -> np.ndarray:
        """Distance of every row to every centroid."""
        return np.abs(self.points(X)[:, None] - self.centroids_[None, :])

    @property
    def boundaries_(self) -> np.ndarray:
        check_is_fitted(self, "centroids_")
        return (self.centroids_[1:] + self.centroids_[:-1]) / 2

    @property
    def raw_boundaries_(self) -> np.ndarray:
        """Group boundaries in raw actions/week along the C/C_max = I/I_max diagonal."""
        t = np.sqrt(self.boundaries_) - 1.0
        return (t * self.c_max_) * (t * self.i_max_)

    def group_of(self, prof: ActivityProfile) -> Group | int:
        label = int(self.predict([[prof.consistency, prof.intensity]])[0])
        return Group(label) if self.n_clusters == 3 else label

    # plain-text persistence

    def to_text(self) -> str:
        check_is_fitted(self, "centroids_")
        fields = {
            "format_version": MODEL_FORMAT_VERSION,
            "n_clusters": self.n_clusters,
            "trim_percentile": repr(float(self.trim_percentile)),
            "max_iter": self.max_iter,
            "update": self.update,
            "seed": self.random_state,
            "centroids": " ".join(repr(float(c)) for c in self.centroids_),
            "consistency_max": repr(self.c_max_),
            "intensity_max": repr(self.i_max_),
            "consistency_trim": repr(self.c_trim_),
            "intensity_trim": repr(self.i_trim_),
            "converged": str(bool(self.converged_)).lower(),
            "n_iter": self.n_iter_,
        }
        return "".join(f"{k}={v}\n" for k, v in fields.items())

    @classmethod
    def from_text(cls, text: str) -> "ActivityGroupModel":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line and not line.startswith("#"))
        if int(kv.get("format_version", -1)) != MODEL_FORMAT_VERSION:
            raise ValueError("unsupported group model format")
        m = cls(
            n_clusters=int(kv["n_clusters"]),
            trim_percentile=float(kv["trim_percentile"]),
            max_iter=int(kv["max_iter"]),
            update=kv["update"],
            random_state=int(kv["seed"]),
        )
        m.centroids_ = np.array([float(c) for c in kv["centroids"].split()])
        m.c_max_ = float(kv["consistency_max"])
        m.i_max_ = float(kv["intensity_max"])
        m.c_trim_ = float(kv["consistency_trim"])
        m.i_trim_ = float(kv["intensity_trim"])
        m.converged_ = kv["converged"] == "true"
        m.n_iter_ = int(kv["n_iter"])
        return m


GroupModel = ActivityGroupModel


def preprocess(profiles: Sequence[ActivityProfile], trim_percentile: float = 99.9):
    """Trim and normalise profiles; returns (retained profiles, points, trim report)."""
    model = ActivityGroupModel(trim_percentile=trim_percentile)
    X = check_profile_array(profiles_matrix(profiles))
    retained, report = model._preprocess(X)
    kept = X[retained]
    model.c_max_ = float(kept[:, 0].max()) or 1.0
    model.i_max_ = float(kept[:, 1].max()) or 1.0
    points = model._points(kept)
    return [p for p, keep in zip(profiles, retained) if keep], points, report


def fit_groups(profiles: Sequence[ActivityProfile], **params) -> ActivityGroupModel:
    return ActivityGroupModel(**params).fit(profiles_matrix(profiles))


def assign(model: ActivityGroupModel, prof: ActivityProfile):
    return model.group_of(prof)


@dataclass
class GroupCountTable:
    groups: list
    rows: dict  # tier name -> counts per group

    @property
    def totals(self) -> list:
        return [sum(r[j] for r in self.rows.values()) for j in range(len(self.groups))]

    def as_rows(self) -> list:
        out = [[name, *counts, sum(counts)] for name, counts in self.rows.items()]
        totals = self.totals
        out.append(["Total", *totals, sum(totals)])
        return out


def group_counts(
    model: ActivityGroupModel,
    profiles: Iterable[ActivityProfile],
    attainment: Mapping[int, Tier],
    tiers: Sequence[Tier] = (Tier.Silver, Tier.Gold),
) -> GroupCountTable:
    """Users per (highest tier attained, activity group)."""
    profiles = [p for p in profiles if attainment.get(p.user_id) in tiers]
    k = model.n_clusters
    rows = {t.name: [0] * k for t in tiers}
    if profiles:
        labels = model.predict(profiles_matrix(profiles))
        for p, g in zip(profiles, labels):
            rows[attainment[p.user_id].name][int(g)] += 1
    names = [Group(j).name for j in range(k)] if k == 3 else [str(j) for j in range(k)]
    return GroupCountTable(names, rows)
