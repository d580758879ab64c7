"""Synthetic cohort generator tests."""

import numpy as np
import pytest

import vlsm
from vlsm.cluster import Connectivity, label_components
from vlsm.errors import ConfigError, DataError
from vlsm.rng import philox_stream


@pytest.fixture
def small_world():
    geom = vlsm.VolumeGeometry((16, 16, 16))
    brain = vlsm.ellipsoid_mask(geom, (7.5, 7.5, 7.5), (7, 7, 7))
    roi = vlsm.box_mask(geom, (6, 6, 6), (3, 3, 3))
    return geom, brain, roi


class TestRegionMasks:
    def test_box_size(self):
        geom = vlsm.VolumeGeometry((8, 8, 8))
        assert vlsm.box_mask(geom, (1, 2, 3), (2, 3, 4)).size() == 24

    def test_box_bounds_checked(self):
        geom = vlsm.VolumeGeometry((8, 8, 8))
        with pytest.raises(ConfigError):
            vlsm.box_mask(geom, (7, 0, 0), (2, 1, 1))

    def test_ellipsoid_inside_bounds(self):
        geom = vlsm.VolumeGeometry((10, 10, 10))
        mask = vlsm.ellipsoid_mask(geom, (4.5, 4.5, 4.5), (4, 3, 2))
        assert 0 < mask.size() < geom.n_voxels
        xs, ys, zs = np.nonzero(mask.voxels)
        radial = ((xs - 4.5) / 4) ** 2 + ((ys - 4.5) / 3) ** 2 + ((zs - 4.5) / 2) ** 2
        assert radial.max() <= 1.0


class TestGrowLesion:
    def test_single_voxel(self, small_world):
        _, brain, _ = small_world
        mask = vlsm.grow_lesion(brain, 1, 1.0, philox_stream(1, 0))
        assert mask.size() == 1
        assert not np.any(mask.voxels & ~brain.voxels)

    def test_whole_connected_brain(self):
        geom = vlsm.VolumeGeometry((6, 6, 6))
        brain = vlsm.box_mask(geom, (1, 1, 1), (3, 3, 3))
        mask = vlsm.grow_lesion(brain, brain.size(), 0.5, philox_stream(2, 0))
        assert np.array_equal(mask.voxels, brain.voxels)

    @pytest.mark.parametrize("bias", [0.0, 1.0, 4.0])
    def test_connected_and_exact_size(self, small_world, bias):
        _, brain, _ = small_world
        for i, size in enumerate((5, 60, 200)):
            mask = vlsm.grow_lesion(brain, size, bias, philox_stream(3, i))
            assert mask.size() == size
            assert not np.any(mask.voxels & ~brain.voxels)
            assert label_components(mask, Connectivity.FACE_6).n_clusters == 1

    def test_target_out_of_range(self, small_world):
        _, brain, _ = small_world
        with pytest.raises(DataError):
            vlsm.grow_lesion(brain, 0, 1.0, philox_stream(4, 0))
        with pytest.raises(DataError):
            vlsm.grow_lesion(brain, brain.size() + 1, 1.0, philox_stream(4, 0))

    def test_restarts_escape_small_component(self):
        # brain is two disjoint boxes; targets bigger than the small one must
        # end up in the big one after restarts
        geom = vlsm.VolumeGeometry((12, 12, 12))
        big = vlsm.box_mask(geom, (0, 0, 0), (6, 6, 6))
        tiny = vlsm.box_mask(geom, (9, 9, 9), (2, 2, 2))
        brain = vlsm.BinaryMask(geom, big.voxels | tiny.voxels)
        for i in range(5):
            mask = vlsm.grow_lesion(brain, 50, 1.0, philox_stream(5, i))
            assert not np.any(mask.voxels & tiny.voxels)

    def test_unreachable_target_errors(self):
        # all components smaller than the target
        geom = vlsm.VolumeGeometry((12, 12, 12))
        a = vlsm.box_mask(geom, (0, 0, 0), (2, 2, 2))
        b = vlsm.box_mask(geom, (6, 6, 6), (2, 2, 2))
        brain = vlsm.BinaryMask(geom, a.voxels | b.voxels)
        with pytest.raises(DataError, match="restarts"):
            vlsm.grow_lesion(brain, 10, 1.0, philox_stream(6, 0), max_restarts=10)


class TestGenerateCohort:
    def _spec(self, small_world, **overrides):
        geom, brain, roi = small_world
        params = dict(
            geometry=geom, brain_mask=brain, n_subjects=8,
            lesion_size_range=(10, 120), roi=roi,
            growth_bias=1.0, score_noise_sd=0.0, seed=77,
        )
        params.update(overrides)
        return vlsm.SyntheticCohortSpec(**params)

    def test_noise_free_scores_match_percent_damage(self, small_world):
        spec = self._spec(small_world)
        cohort, truth = vlsm.generate_cohort(spec)
        for (sid, mask), score in zip(cohort.subjects, cohort.scores):
            assert score == vlsm.percent_damage(mask, spec.roi)
        assert np.array_equal(np.array(truth.true_damage), cohort.scores)

    def test_sizes_within_requested_range(self, small_world):
        spec = self._spec(small_world)
        cohort, _ = vlsm.generate_cohort(spec)
        for _, mask in cohort.subjects:
            assert 10 <= mask.size() <= 120

    def test_deterministic_replay(self, small_world):
        spec = self._spec(small_world)
        a, _ = vlsm.generate_cohort(spec)
        b, _ = vlsm.generate_cohort(spec)
        assert a.ids == b.ids
        assert np.array_equal(a.scores, b.scores)
        for (_, m1), (_, m2) in zip(a.subjects, b.subjects):
            assert np.array_equal(m1.voxels, m2.voxels)

    def test_noise_changes_scores_only(self, small_world):
        clean, _ = vlsm.generate_cohort(self._spec(small_world))
        noisy, truth = vlsm.generate_cohort(
            self._spec(small_world, score_noise_sd=0.05)
        )
        for (_, m1), (_, m2) in zip(clean.subjects, noisy.subjects):
            assert np.array_equal(m1.voxels, m2.voxels)
        assert not np.array_equal(clean.scores, noisy.scores)
        assert np.array_equal(np.array(truth.true_damage), clean.scores)

    def test_unreachable_roi_gives_zero_scores(self):
        # disjoint support: lesions fit only in the far box, roi in its own
        geom = vlsm.VolumeGeometry((16, 16, 16))
        big = vlsm.box_mask(geom, (0, 0, 0), (8, 8, 8))
        small = vlsm.box_mask(geom, (12, 12, 12), (2, 2, 2))
        brain = vlsm.BinaryMask(geom, big.voxels | small.voxels)
        roi = vlsm.box_mask(geom, (12, 12, 12), (2, 2, 2))
        spec = vlsm.SyntheticCohortSpec(
            geometry=geom, brain_mask=brain, n_subjects=6,
            lesion_size_range=(20, 60), roi=roi, growth_bias=1.0,
            score_noise_sd=0.0, seed=5,
        )
        cohort, _ = vlsm.generate_cohort(spec)
        assert np.array_equal(cohort.scores, np.zeros(6))

    def test_spec_validation(self, small_world):
        geom, brain, roi = small_world
        outside = vlsm.box_mask(geom, (0, 0, 0), (2, 2, 2))
        with pytest.raises(ConfigError, match="roi"):
            self._spec(small_world, roi=outside)
        with pytest.raises(ConfigError, match="lesion_size_range"):
            self._spec(small_world, lesion_size_range=(0, 10))
        with pytest.raises(ConfigError, match="exceeds"):
            self._spec(small_world, lesion_size_range=(10, brain.size() + 1))
        with pytest.raises(ConfigError, match="n_subjects"):
            self._spec(small_world, n_subjects=0)
