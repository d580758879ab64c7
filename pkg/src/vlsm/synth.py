"""Synthetic lesion cohorts.

Lesions are grown as face-connected blobs by seeded stochastic region
growth inside a brain-support mask; deficit scores are the fraction of a
target ROI each lesion covers, optionally with additive Gaussian noise.
This gives cohorts with the two properties the analysis cares about:
spatially contiguous lesions and a deficit score with a known anatomical
source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .rng import philox_stream, rand_below
from .volume import BinaryMask, Cohort, VolumeGeometry, percent_damage

_FACE_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


@dataclass(frozen=True)
class SyntheticCohortSpec:
    """Everything needed to generate one reproducible cohort."""

    geometry: VolumeGeometry
    brain_mask: BinaryMask
    n_subjects: int
    lesion_size_range: tuple[int, int]
    roi: BinaryMask
    growth_bias: float = 1.0
    score_noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.geometry.require_compatible(self.brain_mask.geometry, "brain mask")
        self.geometry.require_compatible(self.roi.geometry, "roi")
        if self.n_subjects < 1:
            raise ConfigError(f"n_subjects must be positive, got {self.n_subjects}")
        lo, hi = self.lesion_size_range
        if not (1 <= lo <= hi):
            raise ConfigError(
                f"lesion_size_range must satisfy 1 <= min <= max, got {self.lesion_size_range}"
            )
        if hi > self.brain_mask.size():
            raise ConfigError(
                f"max lesion size {hi} exceeds brain mask size {self.brain_mask.size()}"
            )
        if self.growth_bias < 0:
            raise ConfigError(f"growth_bias must be >= 0, got {self.growth_bias}")
        if self.score_noise_sd < 0:
            raise ConfigError(f"score_noise_sd must be >= 0, got {self.score_noise_sd}")
        if self.roi.size() == 0:
            raise ConfigError("roi is empty")
        if np.any(self.roi.voxels & ~self.brain_mask.voxels):
            raise ConfigError("roi must lie inside the brain mask")

    def echo(self) -> dict:
        """Plain-JSON summary for ground-truth records and manifests."""
        return {
            "dims": list(self.geometry.dims),
            "spacing": list(self.geometry.spacing),
            "origin": list(self.geometry.origin),
            "n_subjects": self.n_subjects,
            "lesion_size_range": list(self.lesion_size_range),
            "growth_bias": self.growth_bias,
            "score_noise_sd": self.score_noise_sd,
            "seed": self.seed,
            "brain_voxels": self.brain_mask.size(),
            "roi_voxels": self.roi.size(),
        }


@dataclass(frozen=True)
class GroundTruth:
    """What the generator knew: the ROI, the support, and true damage."""

    roi: BinaryMask
    brain_mask: BinaryMask
    true_damage: tuple
    spec_echo: dict


# ---------------------------------------------------------------------------
# Support-region helpers
# ---------------------------------------------------------------------------

def ellipsoid_mask(geometry: VolumeGeometry, center, semi_axes) -> BinaryMask:
    """Axis-aligned ellipsoid in voxel coordinates."""
    cx, cy, cz = center
    ax, ay, az = semi_axes
    if min(ax, ay, az) <= 0:
        raise ConfigError(f"semi_axes must be positive, got {semi_axes}")
    nx, ny, nz = geometry.dims
    x, y, z = np.ogrid[0:nx, 0:ny, 0:nz]
    inside = (
        ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 + ((z - cz) / az) ** 2
    ) <= 1.0
    return BinaryMask(geometry, inside)


def box_mask(geometry: VolumeGeometry, corner, shape) -> BinaryMask:
    """Axis-aligned box given its lowest corner and edge lengths in voxels."""
    voxels = np.zeros(geometry.dims, dtype=bool)
    x0, y0, z0 = (int(v) for v in corner)
    sx, sy, sz = (int(v) for v in shape)
    if min(sx, sy, sz) < 1:
        raise ConfigError(f"box shape must be positive, got {shape}")
    if (
        x0 < 0 or y0 < 0 or z0 < 0
        or x0 + sx > geometry.dims[0]
        or y0 + sy > geometry.dims[1]
        or z0 + sz > geometry.dims[2]
    ):
        raise ConfigError(f"box corner={corner} shape={shape} exceeds dims {geometry.dims}")
    voxels[x0 : x0 + sx, y0 : y0 + sy, z0 : z0 + sz] = True
    return BinaryMask(geometry, voxels)


# ---------------------------------------------------------------------------
# Region growth
# ---------------------------------------------------------------------------

def grow_lesion(
    brain_mask: BinaryMask,
    target_size: int,
    growth_bias: float,
    rng: np.random.Generator,
    max_restarts: int = 100,
) -> BinaryMask:
    """Grow a face-connected blob of exactly ``target_size`` voxels.

    Starting from a uniformly random seed voxel, one frontier voxel is
    absorbed per step, sampled with weight exp(growth_bias * k) where k is
    its count of already-occupied face neighbours.  Larger bias gives more
    compact blobs; bias 0 gives unweighted accretion.  If the frontier
    empties early (the seed sat in a too-small component) growth restarts
    from a fresh seed, up to ``max_restarts`` times.
    """
    if not 1 <= target_size <= brain_mask.size():
        raise DataError(
            f"target_size {target_size} not in [1, {brain_mask.size()}]"
        )
    nx, ny, nz = brain_mask.geometry.dims
    brain = brain_mask.voxels
    brain_xyz = np.argwhere(brain)
    n_xy = nx * ny

    def face_neighbors(x, y, z):
        for dx, dy, dz in _FACE_OFFSETS:
            u, v, w = x + dx, y + dy, z + dz
            if 0 <= u < nx and 0 <= v < ny and 0 <= w < nz:
                yield u, v, w

    for _ in range(max_restarts + 1):
        sx, sy, sz = brain_xyz[rand_below(rng, len(brain_xyz))]
        occupied = np.zeros((nx, ny, nz), dtype=bool)
        occupied[sx, sy, sz] = True
        grown = 1
        # frontier maps linear index -> occupied-neighbour count; python dicts
        # iterate in insertion order, which keeps draws reproducible
        frontier: dict[int, int] = {}

        def absorb(x, y, z):
            for u, v, w in face_neighbors(x, y, z):
                if brain[u, v, w] and not occupied[u, v, w]:
                    key = u + nx * v + n_xy * w
                    frontier[key] = frontier.get(key, 0) + 1

        absorb(sx, sy, sz)
        while grown < target_size and frontier:
            keys = np.fromiter(frontier.keys(), dtype=np.int64, count=len(frontier))
            counts = np.fromiter(frontier.values(), dtype=np.int64, count=len(frontier))
            weights = np.exp(growth_bias * (counts - counts.max()))
            cum = np.cumsum(weights)
            u = rng.random() * cum[-1]
            pick = min(int(np.searchsorted(cum, u, side="right")), len(keys) - 1)
            key = int(keys[pick])
            x, y, z = key % nx, (key // nx) % ny, key // n_xy
            del frontier[key]
            occupied[x, y, z] = True
            grown += 1
            absorb(x, y, z)
        if grown == target_size:
            return BinaryMask(brain_mask.geometry, occupied)
    raise DataError(
        f"lesion growth failed: no reachable region of {target_size} voxels "
        f"after {max_restarts} restarts"
    )


def generate_cohort(spec: SyntheticCohortSpec):
    """Generate the cohort described by ``spec``.

    Returns ``(cohort, ground_truth)``.  Subject j draws everything (lesion
    size, growth, score noise) from its own stream (spec.seed, j), so
    cohorts are reproducible and independent of generation order.
    """
    lo, hi = spec.lesion_size_range
    subjects = []
    scores = np.empty(spec.n_subjects)
    true_damage = []
    for j in range(spec.n_subjects):
        rng = philox_stream(spec.seed, j)
        size = lo + rand_below(rng, hi - lo + 1)
        mask = grow_lesion(spec.brain_mask, size, spec.growth_bias, rng)
        damage = percent_damage(mask, spec.roi)
        noise = float(rng.normal(0.0, spec.score_noise_sd)) if spec.score_noise_sd > 0 else 0.0
        subjects.append((f"sub-{j:03d}", mask))
        scores[j] = damage + noise
        true_damage.append(damage)
    cohort = Cohort(tuple(subjects), scores)
    truth = GroundTruth(
        roi=spec.roi,
        brain_mask=spec.brain_mask,
        true_damage=tuple(true_damage),
        spec_echo=spec.echo(),
    )
    return cohort, truth
