"""3D connected-component labeling of binary masks."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from .volume import BinaryMask


class Connectivity(Enum):
    """Which neighbours of a voxel count as connected."""

    FACE_6 = 6
    EDGE_18 = 18
    CORNER_26 = 26

    @property
    def structure(self) -> np.ndarray:
        """3x3x3 boolean stencil for this adjacency."""
        rank = {6: 1, 18: 2, 26: 3}[self.value]
        return ndimage.generate_binary_structure(3, rank)

    @property
    def offsets(self):
        """Neighbour offsets (dx, dy, dz), excluding the centre."""
        s = self.structure
        return [
            (dx - 1, dy - 1, dz - 1)
            for dx, dy, dz in zip(*np.nonzero(s))
            if (dx, dy, dz) != (1, 1, 1)
        ]


@dataclass(frozen=True)
class ClusterLabeling:
    """Partition of a mask's true voxels into connected components.

    Labels run 1..K in order of each component's first voxel in the
    x-fastest linear scan; 0 is background.  ``sizes[k-1]`` is the voxel
    count of component k.
    """

    labels: np.ndarray
    sizes: np.ndarray
    connectivity: Connectivity

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)


def label_components(
    mask: BinaryMask, connectivity: Connectivity = Connectivity.CORNER_26
) -> ClusterLabeling:
    """Label the connected components of a mask.

    Deterministic: component numbering follows the scan order of first
    encounter, so identical masks always produce identical labellings.
    """
    raw, n_raw = ndimage.label(mask.voxels, structure=connectivity.structure)
    if n_raw == 0:
        return ClusterLabeling(
            labels=np.zeros(mask.geometry.dims, dtype=np.int32),
            sizes=np.zeros(0, dtype=np.int64),
            connectivity=connectivity,
        )
    flat = raw.ravel(order="F")
    values, first_index = np.unique(flat, return_index=True)
    nonzero = values != 0
    encounter_order = np.argsort(first_index[nonzero], kind="stable")
    lut = np.zeros(n_raw + 1, dtype=np.int32)
    lut[values[nonzero][encounter_order]] = np.arange(1, n_raw + 1, dtype=np.int32)
    labels = lut[raw]
    sizes = np.bincount(lut[flat], minlength=n_raw + 1)[1:].astype(np.int64)
    return ClusterLabeling(labels=labels, sizes=sizes, connectivity=connectivity)


def max_cluster_size(labeling: ClusterLabeling) -> int:
    """Largest component size, 0 for an empty labeling."""
    return int(labeling.sizes.max()) if labeling.n_clusters else 0
