"""Per-segment local estimates in random bases, and their clustering.

``synthesize_local`` stands in for a local identification method: each
segment's estimate is the true submodel seen through an independent random
change of basis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ClusteringError, PreconditionError
from .linalg import condition_number
from .model import (
    DiscreteState,
    SwitchedModel,
    SwitchingSequence,
    apply_similarity,
    feature_M,
)


def random_transform(n: int, rng: np.random.Generator, max_cond: float = 1e3) -> np.ndarray:
    """Uniform ``[-1, 1]`` entries, redrawn until the condition number is <= ``max_cond``."""
    while True:
        T = rng.uniform(-1.0, 1.0, (n, n))
        if condition_number(T) <= max_cond:
            return T


@dataclass(frozen=True, eq=False)
class LocalEstimateSet:
    """One estimate per segment of ``phi``.

    ``hidden_T[i]`` is the basis change used for segment ``i``; it is kept
    only so tests can compare against ground truth and is ``None`` for
    estimates loaded from disk without it.
    """

    phi: SwitchingSequence
    estimates: tuple[DiscreteState, ...]
    hidden_T: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if len(self.estimates) != self.phi.num_segments:
            raise PreconditionError(
                f"{len(self.estimates)} estimates for {self.phi.num_segments} segments"
            )

    def __len__(self):
        return len(self.estimates)

    @property
    def starts(self) -> np.ndarray:
        return self.phi.segment_starts

    @property
    def modes(self) -> np.ndarray:
        return self.phi.segment_modes

    def features(self) -> np.ndarray:
        return np.array([feature_M(e.A) for e in self.estimates])

    def to_json(self, include_hidden: bool = False) -> list:
        out = []
        for i, (k, est) in enumerate(zip(self.starts, self.estimates)):
            item = {"k": int(k), "mode": int(self.modes[i]), **est.to_dict()}
            if include_hidden and self.hidden_T is not None:
                item["T"] = np.asarray(self.hidden_T[i]).tolist()
            out.append(item)
        return out

    @classmethod
    def from_json(cls, items: list, phi: SwitchingSequence) -> "LocalEstimateSet":
        by_k = {int(it["k"]): it for it in items}
        starts = [int(k) for k in phi.segment_starts]
        missing = [k for k in starts if k not in by_k]
        if missing:
            raise PreconditionError(f"no estimate for segments starting at {missing}")
        ests = tuple(DiscreteState.from_dict(by_k[k]) for k in starts)
        hidden = None
        if all("T" in by_k[k] for k in starts):
            hidden = tuple(np.array(by_k[k]["T"], dtype=float) for k in starts)
        return cls(phi, ests, hidden)

    def save(self, path, include_hidden: bool = False) -> None:
        Path(path).write_text(json.dumps(self.to_json(include_hidden), indent=2) + "\n")


def synthesize_local(
    model: SwitchedModel,
    phi: SwitchingSequence,
    seed=None,
    max_cond: float = 1e3,
) -> LocalEstimateSet:
    """Give every segment its own randomly re-based copy of the active submodel."""
    children = np.random.SeedSequence(seed).spawn(phi.num_segments)
    estimates, Ts = [], []
    for child, mode in zip(children, phi.segment_modes):
        T = random_transform(model.n, np.random.default_rng(child), max_cond)
        estimates.append(apply_similarity(model[int(mode)], T))
        Ts.append(T)
    return LocalEstimateSet(phi, tuple(estimates), tuple(Ts))


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Outcome of feature clustering.

    Attributes:
        features: Clustering feature of every segment estimate.
        labels: Cluster id of every segment (clusters numbered by increasing feature).
        cluster_modes: Mode assigned to each cluster id.
        segment_modes: Mode assigned to each segment via its cluster.
        clusters: Mode -> sorted segment indices in that cluster.
        representatives: Mode -> chosen estimate.
        representative_index: Mode -> segment index of the chosen estimate.
    """

    features: np.ndarray
    labels: np.ndarray
    cluster_modes: dict[int, int]
    segment_modes: np.ndarray
    clusters: dict[int, list[int]]
    representatives: dict[int, DiscreteState]
    representative_index: dict[int, int]

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_modes)

    def sizes(self) -> dict[int, int]:
        return {mode: len(ix) for mode, ix in sorted(self.clusters.items())}

    def to_dict(self) -> dict:
        return {
            "num_clusters": self.num_clusters,
            "labels": self.labels.tolist(),
            "segment_modes": self.segment_modes.tolist(),
            "features": self.features.tolist(),
            "clusters": {str(k): v for k, v in sorted(self.clusters.items())},
            "representative_index": {str(k): v for k, v in sorted(self.representative_index.items())},
        }


def gap_clusters(features, eps: float) -> np.ndarray:
    """Label 1-D points by cutting the sorted values at gaps larger than ``eps``.

    Clusters are numbered in increasing feature order.
    """
    features = np.asarray(features, dtype=float)
    order = np.argsort(features, kind="stable")
    cuts = np.diff(features[order]) > eps
    sorted_labels = np.concatenate(([0], np.cumsum(cuts)))
    labels = np.empty(features.size, dtype=int)
    labels[order] = sorted_labels
    return labels


def default_eps(model: SwitchedModel) -> float:
    """Half the smallest pairwise feature gap of the true submodels."""
    feats = sorted(feature_M(s.A) for s in model)
    if len(feats) < 2:
        return 1.0
    return 0.5 * float(np.min(np.diff(feats)))


def cluster_estimates(est: LocalEstimateSet, eps: float, sigma: int | None = None) -> ClusterResult:
    """Group the segment estimates by feature and pick one representative per mode.

    A cluster takes the mode of its earliest segment, and its representative
    is that earliest segment's estimate.

    Raises:
        ClusteringError: if the number of clusters differs from ``sigma``, or
            two clusters claim the same mode.
    """
    if len(est) == 0:
        raise PreconditionError("need at least one segment")
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    feats = est.features()
    labels = gap_clusters(feats, eps)
    n_clusters = int(labels.max()) + 1
    if sigma is not None and n_clusters != sigma:
        raise ClusteringError(
            f"found {n_clusters} clusters but expected {sigma}; adjust eps (= {eps:.3g})"
        )
    cluster_modes: dict[int, int] = {}
    rep_index: dict[int, int] = {}
    for c in range(n_clusters):
        first = int(np.flatnonzero(labels == c)[0])
        mode = int(est.modes[first])
        if mode in rep_index:
            raise ClusteringError(
                f"segments {rep_index[mode]} and {first} open different clusters"
                f" but share mode {mode}; eps (= {eps:.3g}) is too small"
            )
        cluster_modes[c] = mode
        rep_index[mode] = first
    seg_modes = np.array([cluster_modes[int(c)] for c in labels], dtype=int)
    clusters = {
        mode: np.flatnonzero(labels == c).tolist() for c, mode in cluster_modes.items()
    }
    reps = {mode: est.estimates[i] for mode, i in rep_index.items()}
    return ClusterResult(feats, labels, cluster_modes, seg_modes, clusters, reps, rep_index)
