"""Voxel-based lesion-symptom mapping with permutation-based correction.

The package computes voxel-wise lesion/deficit t statistics over a cohort of
binary lesion masks, then corrects for multiple comparisons with permutation
nulls: cluster-size thresholds (max-cluster or pooled all-clusters
construction), a max-t FWER threshold, and Benjamini-Hochberg FDR.  A
synthetic-cohort generator provides reproducible test beds with known ground
truth.
"""

__version__ = "0.1.0"

from .cluster import ClusterLabeling, Connectivity, label_components, max_cluster_size
from .errors import ConfigError, DataError, NiftiFormatError, NumericError, VlsmError
from .permute import (
    CorrectedResult,
    NullDistribution,
    PermutationConfig,
    ThresholdTable,
    apply_correction,
    audit_null,
    build_null,
    derive_thresholds,
    false_positive_rate,
    percentile_threshold,
    permute_scores,
)
from .stats import (
    FdrResult,
    StatMap,
    SuprathresholdMask,
    apply_p_threshold,
    fdr_bh,
    p_values,
    t_to_p,
    voxelwise_t,
)
from .synth import (
    GroundTruth,
    SyntheticCohortSpec,
    box_mask,
    ellipsoid_mask,
    generate_cohort,
    grow_lesion,
)
from .volume import (
    BinaryMask,
    Cohort,
    CountMap,
    VolumeGeometry,
    overlap_map,
    percent_damage,
    read_cohort_dir,
    read_mask,
    read_nifti,
    write_cohort_dir,
    write_nifti,
)

__all__ = [
    "__version__",
    "BinaryMask",
    "ClusterLabeling",
    "Cohort",
    "ConfigError",
    "Connectivity",
    "CorrectedResult",
    "CountMap",
    "DataError",
    "FdrResult",
    "GroundTruth",
    "NiftiFormatError",
    "NullDistribution",
    "NumericError",
    "PermutationConfig",
    "StatMap",
    "SuprathresholdMask",
    "SyntheticCohortSpec",
    "ThresholdTable",
    "VlsmError",
    "VolumeGeometry",
    "apply_correction",
    "apply_p_threshold",
    "audit_null",
    "box_mask",
    "build_null",
    "derive_thresholds",
    "ellipsoid_mask",
    "false_positive_rate",
    "fdr_bh",
    "generate_cohort",
    "grow_lesion",
    "label_components",
    "max_cluster_size",
    "overlap_map",
    "p_values",
    "percent_damage",
    "percentile_threshold",
    "permute_scores",
    "read_cohort_dir",
    "read_mask",
    "read_nifti",
    "t_to_p",
    "voxelwise_t",
    "write_cohort_dir",
    "write_nifti",
]
