import numpy as np
import pytest

import rwreg
from rwreg.errors import AmplitudeExceedsRadiusError

# regression anchors for the committed 64x64 fixture: deterministic pipeline,
# one bump of amplitude (2, 0), bin width 1.0
FIXTURE_COUNTS = {
    "count_disagreement": 32,
    "count_mode_beats_mli": 3,
    "count_mli_beats_mode": 29,
    "count_mode_eq_gt": 4042,
    "count_mli_eq_gt": 4071,
}


class TestWorkedExamples:
    def test_uniform_vs_peaked(self):
        check = rwreg.check_uniform_vs_peaked()
        assert check.quantities["uniform_entropy_bits"] == 2.0
        assert check.quantities["peaked_entropy_bits"] == pytest.approx(1.3568, abs=1e-3)
        assert check.all_passed

    def test_entropy_dissociation(self):
        check = rwreg.check_entropy_dissociation()
        q = check.quantities
        assert q["transform_entropy_bits"] == pytest.approx(2.5795, abs=1e-4)
        assert q["label_entropy_bits"] == pytest.approx(0.6343, abs=1e-4)
        assert q["mass_at_50"] == pytest.approx(0.84, abs=1e-9)
        assert q["mass_at_200"] == pytest.approx(0.16, abs=1e-9)
        assert q["mode_label"] == q["most_likely_label"] == 50.0
        assert check.all_passed

    def test_mode_vs_mli(self):
        check = rwreg.check_mode_vs_mli()
        q = check.quantities
        assert q["mode_label"] == 50.0
        assert q["most_likely_label"] == 200.0
        assert q["mode_label"] != q["most_likely_label"]
        assert q["mli_mass"] == pytest.approx(0.6, abs=1e-9)
        assert q["transform_entropy_bits"] == pytest.approx(1.9219, abs=1e-3)
        assert q["transform_entropy_bits"] < 2.0
        assert check.all_passed

    def test_registry_ids(self):
        assert sorted(rwreg.WORKED_EXAMPLES) == [1, 2, 5]
        for fn in rwreg.WORKED_EXAMPLES.values():
            assert fn().all_passed

    def test_check_failure_is_reported(self):
        check = rwreg.CheckResult(
            name="x", quantities={"a": 1.0}, expected={"a": 2.0}, tolerance={"a": 0.5}
        )
        assert not check.all_passed
        assert check.passed == {"a": False}


class TestBumpDeformation:
    def test_empty_spec_is_zero_field(self):
        spec = rwreg.BumpSpec((), (), ())
        field = rwreg.make_bump_deformation((5, 5), spec)
        assert (field.vectors == 0.0).all()

    def test_peak_value_at_center(self):
        spec = rwreg.BumpSpec(((4.0, 4.0),), ((2.0, 0.0),), (3.0,))
        field = rwreg.make_bump_deformation((9, 9), spec)
        assert field.vectors[4, 4, 0] == pytest.approx(2.0, abs=1e-12)
        assert field.vectors[4, 4, 1] == 0.0

    def test_magnitude_bounded_by_amplitude_sum(self):
        spec = rwreg.BumpSpec(
            ((3.0, 3.0), (10.0, 12.0)),
            ((1.0, -2.0), (0.5, 0.5)),
            (2.0, 5.0),
        )
        field = rwreg.make_bump_deformation((16, 16), spec)
        norms = np.linalg.norm(field.vectors, axis=-1)
        bound = np.linalg.norm([1.0, -2.0]) + np.linalg.norm([0.5, 0.5])
        assert norms.max() <= bound + 1e-12

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            rwreg.BumpSpec(((1.0, 1.0),), (), ())
        with pytest.raises(ValueError):
            rwreg.BumpSpec(((1.0, 1.0),), ((1.0, 1.0),), (0.0,))
        with pytest.raises(ValueError):
            rwreg.BumpSpec(((1.0, 1.0),), ((1.0, 1.0, 1.0),), (1.0,))

    def test_spec_dict_round_trip(self):
        spec = rwreg.BumpSpec(((1.0, 2.0),), ((0.5, -0.5),), (3.0,), seed=7)
        assert rwreg.BumpSpec.from_dict(spec.to_dict()) == spec

    def test_random_spec_is_seed_deterministic(self):
        a = rwreg.random_bump_spec((32, 32), 3, 1.5, seed=5)
        b = rwreg.random_bump_spec((32, 32), 3, 1.5, seed=5)
        c = rwreg.random_bump_spec((32, 32), 3, 1.5, seed=6)
        assert a == b
        assert a != c
        assert len(a.centers) == 3


class TestTwoRegionImage:
    def test_values_are_two_level(self):
        img = rwreg.two_region_image(32, radius=8)
        assert set(np.unique(img.values)) == {50.0, 200.0}

    def test_disk_is_inside(self):
        img = rwreg.two_region_image(64, radius=16)
        assert img.values[32, 32] == 200.0
        assert img.values[0, 0] == 50.0

    def test_committed_fixture_matches_generator(self, fixture_image, fixture_spec):
        import make_fixtures

        assert np.array_equal(fixture_image.values, make_fixtures.fixture_image().values)
        assert fixture_spec == make_fixtures.fixture_bump_spec()


class TestRunSynthExperiment:
    def test_amplitude_above_radius_rejected(self):
        img = rwreg.two_region_image(16, radius=4)
        spec = rwreg.BumpSpec(((8.0, 8.0),), ((5.0, 0.0),), (3.0,))
        with pytest.raises(AmplitudeExceedsRadiusError):
            rwreg.run_synth_experiment(img, spec, rwreg.RegistrationParams(radius=2))

    def test_zero_deformation_recovers_image(self):
        img = rwreg.two_region_image(24, radius=6)
        spec = rwreg.BumpSpec((), (), ())
        params = rwreg.RegistrationParams(radius=1, sigma=0.5)
        report = rwreg.run_synth_experiment(img, spec, params, bin_width=0.0)
        synth = report.synth
        assert synth.identity_error.mean_abs == 0.0
        assert synth.mode_label_error.mean_abs <= 1e-6
        # a fixed wrong one-voxel shift must do strictly worse
        shifted = np.roll(img.values, 1, axis=0)
        wrong_shift_mae = float(np.abs(shifted - img.values).mean())
        assert synth.mode_label_error.mean_abs < wrong_shift_mae

    def test_constant_image_all_errors_zero(self):
        img = rwreg.ScalarImage(np.full((16, 16), 77.0))
        spec = rwreg.BumpSpec(((8.0, 8.0),), ((1.0, 0.5),), (3.0,))
        report = rwreg.run_synth_experiment(
            img, spec, rwreg.RegistrationParams(radius=2), bin_width=0.0
        )
        synth = report.synth
        assert synth.identity_error.mean_abs == 0.0
        assert synth.mode_label_error.max_abs == 0.0
        assert synth.mli_error.max_abs == 0.0
        assert synth.count_disagreement == 0

    def test_committed_fixture_regression(self, synth_report):
        synth = synth_report.synth
        for key, value in FIXTURE_COUNTS.items():
            assert getattr(synth, key) == value, key
        assert synth.voxel_count == 64 * 64
        assert synth.mode_label_error.mean_abs < synth.identity_error.mean_abs
        assert synth.identity_error.mean_abs == pytest.approx(1.8215, abs=1e-3)
        assert synth.mode_label_error.mean_abs == pytest.approx(0.2443, abs=1e-3)

    def test_disagreement_count_matches_maps(self, synth_report, fixture_pipeline):
        _, field, dset, maps = fixture_pipeline
        assert synth_report.synth.count_disagreement == int(maps.disagreement.sum())

    def test_params_echoed(self, synth_report, fixture_spec):
        synth = synth_report.synth
        assert synth.params["radius"] == 2
        assert synth.params["deterministic"] is True
        assert synth.bump_spec == fixture_spec.to_dict()


class TestExperimentReport:
    def test_json_round_trip_checks_only(self):
        report = rwreg.ExperimentReport(checks=(rwreg.check_uniform_vs_peaked(),))
        back = rwreg.ExperimentReport.from_json(report.to_json())
        assert back.to_dict() == report.to_dict()

    def test_json_round_trip_with_synth(self, synth_report):
        back = rwreg.ExperimentReport.from_json(synth_report.to_json())
        assert back.to_dict() == synth_report.to_dict()
        assert back.synth.identity_error.mean_abs == synth_report.synth.identity_error.mean_abs

    def test_count_bounds_validated(self):
        with pytest.raises(ValueError):
            rwreg.SynthSummary(
                voxel_count=4,
                bin_width=0.0,
                params={},
                bump_spec={},
                identity_error=rwreg.experiments.ErrorSummary(0.0, 0.0),
                mode_label_error=rwreg.experiments.ErrorSummary(0.0, 0.0),
                mli_error=rwreg.experiments.ErrorSummary(0.0, 0.0),
                count_mode_eq_gt=5,
                count_mli_eq_gt=0,
                count_disagreement=0,
                count_mode_beats_mli=0,
                count_mli_beats_mode=0,
            )
