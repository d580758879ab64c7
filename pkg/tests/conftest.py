"""Shared fixtures and test oracles."""

import numpy as np
import pytest

import vlsm


@pytest.fixture
def geom4():
    return vlsm.VolumeGeometry((4, 4, 4))


def random_mask(geometry, rng, density=0.4):
    return vlsm.BinaryMask(geometry, rng.random(geometry.dims) < density)


def random_cohort(geometry, n_subjects, rng, density=0.4, scores=None):
    """Cohort with iid random masks and (by default) standard normal scores."""
    subjects = tuple(
        (f"s{j:02d}", random_mask(geometry, rng, density)) for j in range(n_subjects)
    )
    if scores is None:
        scores = rng.normal(size=n_subjects)
    return vlsm.Cohort(subjects, np.asarray(scores, dtype=float))


def flood_fill_labels(voxels, offsets):
    """Brute-force BFS connected components, first-encounter order in
    x-fastest scan.  Independent oracle for the cluster module."""
    nx, ny, nz = voxels.shape
    labels = np.zeros(voxels.shape, dtype=int)
    sizes = []
    next_label = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not voxels[x, y, z] or labels[x, y, z]:
                    continue
                next_label += 1
                queue = [(x, y, z)]
                labels[x, y, z] = next_label
                count = 0
                while queue:
                    cx, cy, cz = queue.pop()
                    count += 1
                    for dx, dy, dz in offsets:
                        u, v, w = cx + dx, cy + dy, cz + dz
                        if (
                            0 <= u < nx and 0 <= v < ny and 0 <= w < nz
                            and voxels[u, v, w] and not labels[u, v, w]
                        ):
                            labels[u, v, w] = next_label
                            queue.append((u, v, w))
                sizes.append(count)
    return labels, sizes
