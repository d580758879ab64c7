"""Permutation engine.

Builds null distributions of suprathreshold cluster sizes and of the maximum
t statistic by re-running the voxel-wise analysis under random score
permutations, derives cluster-size and FWER thresholds from them, applies
the corrections to an observed map, and audits false-positive rates.

Two null constructions are provided.  ``max-cluster`` mode enters only the
largest cluster of each permutation into the null (the construction that
controls the family-wise rate).  ``all-clusters`` mode pools every cluster
from every permutation; it is retained deliberately because it demonstrates
how badly that construction inflates false positives, and is marked
demonstration-only in the CLI.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .cluster import Connectivity, label_components
from .errors import ConfigError, DataError
from .rng import fisher_yates, philox_stream
from .stats import StatMap, TTestDesign, apply_p_threshold, p_values
from .stats import TAILS
from .volume import BinaryMask, Cohort, VolumeGeometry

MODES = ("max-cluster", "all-clusters")

#: Voxel-wise p thresholds evaluated by default, most permissive first.
DEFAULT_P_THRESHOLDS = (0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001)


@dataclass(frozen=True)
class PermutationConfig:
    """Parameters of one permutation analysis.

    Permutation i (1-based) draws from the Philox stream
    ``(master_seed, i)``, so results are independent of evaluation order and
    of how many workers run the permutations.
    """

    n_permutations: int = 1000
    p_thresholds: tuple = DEFAULT_P_THRESHOLDS
    alpha: float = 0.05
    mode: str = "max-cluster"
    connectivity: Connectivity = Connectivity.CORNER_26
    tail: str = "greater"
    min_lesion: int = 2
    master_seed: int = 0

    def __post_init__(self):
        if self.n_permutations < 1:
            raise ConfigError("no permutations requested (n_permutations must be >= 1)")
        thresholds = tuple(float(p) for p in self.p_thresholds)
        if not thresholds:
            raise ConfigError("p_thresholds must be nonempty")
        if any(not 0.0 < p < 1.0 for p in thresholds):
            raise ConfigError(f"p_thresholds must lie in (0, 1), got {thresholds}")
        if any(a <= b for a, b in zip(thresholds, thresholds[1:])):
            raise ConfigError(
                f"p_thresholds must be strictly decreasing, got {thresholds}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.connectivity, Connectivity):
            raise ConfigError(f"connectivity must be a Connectivity, got {self.connectivity!r}")
        if self.tail not in TAILS:
            raise ConfigError(f"tail must be one of {TAILS}, got {self.tail!r}")
        if self.min_lesion < 1:
            raise ConfigError(f"min_lesion must be >= 1, got {self.min_lesion}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError(f"master_seed must be a 64-bit integer, got {self.master_seed}")
        object.__setattr__(self, "p_thresholds", thresholds)

    def echo(self) -> dict:
        return {
            "n_permutations": self.n_permutations,
            "p_thresholds": list(self.p_thresholds),
            "alpha": self.alpha,
            "mode": self.mode,
            "connectivity": self.connectivity.value,
            "tail": self.tail,
            "min_lesion": self.min_lesion,
            "master_seed": int(self.master_seed),
        }


def permute_scores(scores, rng: np.random.Generator) -> np.ndarray:
    """Uniform random rearrangement of the scores (Fisher-Yates)."""
    scores = np.asarray(scores)
    if scores.size == 0:
        raise ValueError("cannot permute an empty score list")
    return fisher_yates(scores, rng)


# ---------------------------------------------------------------------------
# The permutation pass
# ---------------------------------------------------------------------------

class _Engine:
    """Shared, immutable state for evaluating one permutation end to end."""

    def __init__(self, cohort: Cohort, config: PermutationConfig):
        if not np.isfinite(cohort.scores).all():
            raise DataError("cohort scores contain non-finite values")
        self.geometry = cohort.geometry
        self.config = config
        self.design = TTestDesign(cohort.lesion_matrix(), config.min_lesion)
        self.eligible_idx = np.flatnonzero(self.design.eligible)
        self.scores = np.asarray(cohort.scores, dtype=float)

    def run_one(self, stream_index: int):
        """Evaluate the permutation drawn from stream ``stream_index``."""
        rng = philox_stream(self.config.master_seed, stream_index)
        y = fisher_yates(self.scores, rng)
        t, _ = self.design.t_values(y)
        valid = ~np.isnan(t)
        p = np.full(t.shape, np.inf)
        if valid.any():
            p[valid] = p_values(t[valid], self.design.df, self.config.tail)
        flat = np.zeros(self.geometry.n_voxels, dtype=bool)
        sizes_per_threshold = []
        for p_threshold in self.config.p_thresholds:
            flat[:] = False
            flat[self.eligible_idx[p < p_threshold]] = True
            labeling = label_components(
                BinaryMask(self.geometry, flat), self.config.connectivity
            )
            sizes_per_threshold.append(labeling.sizes)
        finite = t[valid]
        max_t = float(finite.max()) if finite.size else 0.0
        return sizes_per_threshold, max_t


def _run_chunk(engine: _Engine, stream_indices):
    return [engine.run_one(i) for i in stream_indices]


@dataclass(frozen=True)
class PermutationRecords:
    """Raw per-permutation results: cluster sizes per threshold, and max t."""

    p_thresholds: tuple
    cluster_sizes: tuple          # [threshold][permutation] -> int64 array
    max_t: np.ndarray
    first_stream: int

    @property
    def n_permutations(self) -> int:
        return len(self.max_t)


def run_permutation_pass(
    cohort: Cohort,
    config: PermutationConfig,
    n_permutations: Optional[int] = None,
    first_stream: int = 1,
    n_jobs: int = 1,
) -> PermutationRecords:
    """Evaluate permutations on streams ``first_stream .. first_stream+n-1``.

    Results are keyed by stream index, so any ``n_jobs`` produces identical
    output.
    """
    n = config.n_permutations if n_permutations is None else int(n_permutations)
    if n < 1:
        raise ConfigError("no permutations requested")
    engine = _Engine(cohort, config)
    indices = list(range(first_stream, first_stream + n))
    workers = n_jobs if n_jobs > 0 else (os.cpu_count() or 1)
    if workers == 1 or n == 1:
        results = _run_chunk(engine, indices)
    else:
        chunks = [c.tolist() for c in np.array_split(indices, min(workers * 4, n))]
        parts = Parallel(n_jobs=workers)(
            delayed(_run_chunk)(engine, chunk) for chunk in chunks if chunk
        )
        results = [record for part in parts for record in part]
    cluster_sizes = tuple(
        tuple(results[i][0][k] for i in range(n))
        for k in range(len(config.p_thresholds))
    )
    max_t = np.array([results[i][1] for i in range(n)])
    return PermutationRecords(
        p_thresholds=config.p_thresholds,
        cluster_sizes=cluster_sizes,
        max_t=max_t,
        first_stream=first_stream,
    )


# ---------------------------------------------------------------------------
# Null distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NullDistribution:
    """Permutation null: per-threshold cluster sizes (grouped by
    permutation) plus the max-t sample of every permutation."""

    config: PermutationConfig
    geometry: VolumeGeometry
    cluster_sizes: tuple          # [threshold][permutation] -> int64 array
    max_t_samples: np.ndarray
    first_stream: int = 1

    def __post_init__(self):
        n = self.config.n_permutations
        if len(self.max_t_samples) != n:
            raise DataError(
                f"expected {n} max-t samples, got {len(self.max_t_samples)}"
            )
        if len(self.cluster_sizes) != len(self.config.p_thresholds):
            raise DataError("cluster size groups do not match p_thresholds")
        for groups in self.cluster_sizes:
            if len(groups) != n:
                raise DataError("per-permutation grouping does not match n_permutations")
        if not np.isfinite(self.max_t_samples).all():
            raise DataError("max-t samples must be finite")

    @property
    def n_permutations(self) -> int:
        return self.config.n_permutations

    def threshold_index(self, p_threshold: float) -> int:
        for i, p in enumerate(self.config.p_thresholds):
            if p == p_threshold:
                return i
        raise KeyError(f"p_threshold {p_threshold} not in {self.config.p_thresholds}")

    def max_cluster_samples(self, index: int) -> np.ndarray:
        """One sample per permutation: its largest cluster size (0 if none)."""
        groups = self.cluster_sizes[index]
        return np.array(
            [int(sizes.max()) if sizes.size else 0 for sizes in groups], dtype=np.int64
        )

    def all_cluster_samples(self, index: int):
        """Every cluster size pooled, with the 1-based permutation index of each."""
        groups = self.cluster_sizes[index]
        sizes = [np.asarray(sizes, dtype=np.int64) for sizes in groups]
        perm_idx = [
            np.full(len(s), self.first_stream + i, dtype=np.int64)
            for i, s in enumerate(sizes)
        ]
        if sizes:
            return np.concatenate(sizes), np.concatenate(perm_idx)
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)

    def samples_for_mode(self, index: int) -> np.ndarray:
        if self.config.mode == "max-cluster":
            return self.max_cluster_samples(index)
        return self.all_cluster_samples(index)[0]

    def to_dict(self) -> dict:
        per_threshold = []
        for i, p in enumerate(self.config.p_thresholds):
            sizes, perm_idx = self.all_cluster_samples(i)
            per_threshold.append(
                {
                    "p_threshold": p,
                    "max_cluster_samples": self.max_cluster_samples(i).tolist(),
                    "cluster_sizes": sizes.tolist(),
                    "permutation_index": perm_idx.tolist(),
                }
            )
        return {
            "schema": "vlsm-null-distribution/1",
            "config": self.config.echo(),
            "geometry": {
                "dims": list(self.geometry.dims),
                "spacing": list(self.geometry.spacing),
                "origin": list(self.geometry.origin),
            },
            "first_stream": self.first_stream,
            "max_t_samples": [float(v) for v in self.max_t_samples],
            "per_threshold": per_threshold,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NullDistribution":
        cfg = dict(payload["config"])
        cfg["connectivity"] = Connectivity(cfg["connectivity"])
        cfg["p_thresholds"] = tuple(cfg["p_thresholds"])
        config = PermutationConfig(**cfg)
        geom = payload["geometry"]
        geometry = VolumeGeometry(
            tuple(geom["dims"]), tuple(geom["spacing"]), tuple(geom["origin"])
        )
        first_stream = int(payload.get("first_stream", 1))
        n = config.n_permutations
        cluster_sizes = []
        for entry in payload["per_threshold"]:
            groups = [[] for _ in range(n)]
            for size, perm in zip(entry["cluster_sizes"], entry["permutation_index"]):
                groups[int(perm) - first_stream].append(int(size))
            cluster_sizes.append(
                tuple(np.array(g, dtype=np.int64) for g in groups)
            )
        return cls(
            config=config,
            geometry=geometry,
            cluster_sizes=tuple(cluster_sizes),
            max_t_samples=np.array(payload["max_t_samples"], dtype=float),
            first_stream=first_stream,
        )


def null_from_records(
    records: PermutationRecords,
    config: PermutationConfig,
    geometry: VolumeGeometry,
) -> NullDistribution:
    """Wrap a permutation pass as a null distribution."""
    config = replace(config, n_permutations=records.n_permutations)
    return NullDistribution(
        config=config,
        geometry=geometry,
        cluster_sizes=records.cluster_sizes,
        max_t_samples=records.max_t,
        first_stream=records.first_stream,
    )


def build_null(cohort: Cohort, config: PermutationConfig, n_jobs: int = 1) -> NullDistribution:
    """Run the configured permutations (streams 1..n) and collect the null."""
    records = run_permutation_pass(cohort, config, n_jobs=n_jobs)
    return null_from_records(records, config, cohort.geometry)


def audit_null(
    cohort: Cohort,
    config: PermutationConfig,
    n_permutations: int,
    n_jobs: int = 1,
) -> NullDistribution:
    """A fresh batch of null permutations, disjoint from the build batch.

    Uses streams ``n+1 .. n+M`` of the same master seed, so the audit is
    reproducible yet independent of the thresholds it checks.
    """
    records = run_permutation_pass(
        cohort,
        config,
        n_permutations=n_permutations,
        first_stream=config.n_permutations + 1,
        n_jobs=n_jobs,
    )
    return null_from_records(records, config, cohort.geometry)


# ---------------------------------------------------------------------------
# Thresholds and corrections
# ---------------------------------------------------------------------------

def percentile_threshold(samples, alpha: float) -> float:
    """Order statistic at rank ceil((1-alpha)*n) of the sorted samples.

    A candidate passes the correction only if its statistic is strictly
    greater than the returned value.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("percentile_threshold: empty samples")
    ordered = np.sort(samples)
    # the small slack keeps fp noise in (1-alpha)*n from bumping the rank up
    rank = math.ceil((1.0 - alpha) * samples.size - 1e-9)
    rank = min(max(rank, 1), samples.size)
    return float(ordered[rank - 1])


@dataclass(frozen=True)
class ThresholdTable:
    """Per-p cluster-size thresholds plus the FWER t threshold."""

    p_thresholds: tuple
    cluster_size_thresholds: tuple
    fwer_t_threshold: float
    alpha: float
    mode: str
    geometry: Optional[VolumeGeometry] = None

    def cluster_threshold(self, p_threshold: float) -> int:
        for p, thr in zip(self.p_thresholds, self.cluster_size_thresholds):
            if p == p_threshold:
                return thr
        raise KeyError(f"p_threshold {p_threshold} not in {self.p_thresholds}")

    def to_dict(self) -> dict:
        payload = {
            "schema": "vlsm-threshold-table/1",
            "alpha": self.alpha,
            "mode": self.mode,
            "fwer_t_threshold": self.fwer_t_threshold,
            "per_threshold": [
                {"p_threshold": p, "cluster_size_threshold": int(thr)}
                for p, thr in zip(self.p_thresholds, self.cluster_size_thresholds)
            ],
        }
        if self.geometry is not None:
            payload["geometry"] = {
                "dims": list(self.geometry.dims),
                "spacing": list(self.geometry.spacing),
                "origin": list(self.geometry.origin),
            }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ThresholdTable":
        geometry = None
        if "geometry" in payload:
            g = payload["geometry"]
            geometry = VolumeGeometry(tuple(g["dims"]), tuple(g["spacing"]), tuple(g["origin"]))
        return cls(
            p_thresholds=tuple(e["p_threshold"] for e in payload["per_threshold"]),
            cluster_size_thresholds=tuple(
                int(e["cluster_size_threshold"]) for e in payload["per_threshold"]
            ),
            fwer_t_threshold=float(payload["fwer_t_threshold"]),
            alpha=float(payload["alpha"]),
            mode=str(payload["mode"]),
            geometry=geometry,
        )


def derive_thresholds(null: NullDistribution, alpha: Optional[float] = None) -> ThresholdTable:
    """Cluster-size threshold per p level and the FWER t threshold.

    Cluster samples come from the null's mode (max-cluster or pooled).  A
    threshold of 0 is used when the null produced no samples at all, since
    then any observed cluster stands out from the (empty) null.
    """
    alpha = null.config.alpha if alpha is None else float(alpha)
    thresholds = []
    for i in range(len(null.config.p_thresholds)):
        samples = null.samples_for_mode(i)
        if samples.size == 0:
            thresholds.append(0)
        else:
            thresholds.append(int(percentile_threshold(samples, alpha)))
    fwer_t = percentile_threshold(null.max_t_samples, alpha)
    return ThresholdTable(
        p_thresholds=null.config.p_thresholds,
        cluster_size_thresholds=tuple(thresholds),
        fwer_t_threshold=fwer_t,
        alpha=alpha,
        mode=null.config.mode,
        geometry=null.geometry,
    )


@dataclass(frozen=True)
class CorrectedResult:
    """Surviving clusters per p threshold plus the FWER-corrected mask.

    ``surviving_labelings`` are the suprathreshold labelings restricted to
    clusters that passed the size threshold, keeping their original label
    numbers so they match the ``surviving_clusters`` inventories.
    """

    p_thresholds: tuple
    surviving_labelings: tuple    # int32 label volume per p threshold
    surviving_masks: tuple        # BinaryMask per p threshold
    surviving_clusters: tuple     # per threshold: tuple of (label, size)
    fwer_mask: BinaryMask
    provenance: dict

    def surviving_mask(self, p_threshold: float) -> BinaryMask:
        for p, mask in zip(self.p_thresholds, self.surviving_masks):
            if p == p_threshold:
                return mask
        raise KeyError(f"p_threshold {p_threshold} not in {self.p_thresholds}")


def apply_correction(
    stat_map: StatMap,
    table: ThresholdTable,
    config: PermutationConfig,
    null_summary: Optional[dict] = None,
) -> CorrectedResult:
    """Keep observed clusters larger than the null threshold at each p level.

    Also produces the FWER mask: voxels whose t exceeds the max-t threshold.
    """
    if table.geometry is not None:
        stat_map.geometry.require_compatible(table.geometry, "stat map vs threshold table")
    labelings = []
    masks = []
    inventories = []
    for p_threshold in table.p_thresholds:
        supra = apply_p_threshold(stat_map, p_threshold, config.tail)
        labeling = label_components(supra.mask, config.connectivity)
        size_thr = table.cluster_threshold(p_threshold)
        keep = np.flatnonzero(labeling.sizes > size_thr) + 1
        lut = np.zeros(labeling.n_clusters + 1, dtype=np.int32)
        lut[keep] = keep.astype(np.int32)
        restricted = lut[labeling.labels]
        labelings.append(restricted)
        masks.append(BinaryMask(stat_map.geometry, restricted > 0))
        inventories.append(
            tuple((int(k), int(labeling.sizes[k - 1])) for k in keep)
        )
    with np.errstate(invalid="ignore"):
        fwer_voxels = stat_map.t > table.fwer_t_threshold
    fwer_mask = BinaryMask(stat_map.geometry, fwer_voxels & stat_map.analyzable.voxels)
    provenance = {
        "config": config.echo(),
        "master_seed": int(config.master_seed),
        "thresholds": table.to_dict(),
    }
    if null_summary is not None:
        provenance["null_summary"] = null_summary
    return CorrectedResult(
        p_thresholds=table.p_thresholds,
        surviving_labelings=tuple(labelings),
        surviving_masks=tuple(masks),
        surviving_clusters=tuple(inventories),
        fwer_mask=fwer_mask,
        provenance=provenance,
    )


def false_positive_rate(null: NullDistribution, table: ThresholdTable) -> dict:
    """Fraction of permutations with any cluster above the size threshold.

    Evaluated per p threshold against the given table; the null may be the
    build batch itself or a fresh audit batch.
    """
    if table.p_thresholds != null.config.p_thresholds:
        raise DataError(
            f"threshold table levels {table.p_thresholds} do not match "
            f"null levels {null.config.p_thresholds}"
        )
    rates = {}
    for i, p_threshold in enumerate(null.config.p_thresholds):
        thr = table.cluster_threshold(p_threshold)
        hits = sum(
            1 for sizes in null.cluster_sizes[i] if sizes.size and sizes.max() > thr
        )
        rates[p_threshold] = hits / null.n_permutations
    return rates


def null_summary_statistics(null: NullDistribution) -> dict:
    """Compact per-threshold quantiles for provenance records."""
    summary = {"n_permutations": null.n_permutations, "per_threshold": []}
    for i, p in enumerate(null.config.p_thresholds):
        samples = null.max_cluster_samples(i)
        summary["per_threshold"].append(
            {
                "p_threshold": p,
                "max_cluster_median": float(np.median(samples)),
                "max_cluster_p95": float(np.quantile(samples, 0.95)),
                "max_cluster_max": int(samples.max()) if samples.size else 0,
            }
        )
    summary["max_t_median"] = float(np.median(null.max_t_samples))
    summary["max_t_p95"] = float(np.quantile(null.max_t_samples, 0.95))
    return summary
