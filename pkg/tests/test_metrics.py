import math

import numpy as np
import pytest

from src.core import PoseSE2
from src.exceptions import DegenerateGeometryError, InsufficientDataError
from src.metrics import (Alignment, align_points, align_umeyama, associate_timestamps, ate_rmse, correct_rate,
                         tracking_report)
from src.odometry import Trajectory
from src.simulator import (DetectorNoise, ObjectPathSpec, ObjectSpec, SceneConfig, generate,
                           scenario_occlusion_crossing)


def _line(n, step=0.1, dt=0.1):
    return Trajectory([(k * dt, PoseSE2(k * step, 0.0, 0.0)) for k in range(n)])


def _with_lateral(gt, offsets):
    return Trajectory([(t, PoseSE2(p.x, p.y + offsets[k % len(offsets)], p.theta))
                       for k, (t, p) in enumerate(gt)])


def _wander(rng, n=60):
    steps = np.cumsum(rng.normal(0, 0.2, size=(n, 2)), axis=0)
    return Trajectory([(0.1 * k, PoseSE2(float(x), float(y), 0.0)) for k, (x, y) in enumerate(steps)])


def _noisy(rng, gt, sigma=0.05):
    return Trajectory([(t, PoseSE2(p.x + rng.normal(0, sigma), p.y + rng.normal(0, sigma), p.theta))
                       for t, p in gt])


class TestAlignment:
    def test_recovers_rigid_offset(self, rng):
        gt = Trajectory([(float(k), PoseSE2(*rng.uniform(-5, 5, 2), 0.0)) for k in range(30)])
        offset = PoseSE2(1.5, -2.0, 0.6)
        est = gt.transformed(offset.inverse())
        alignment = align_umeyama(est, gt)
        assert (alignment.pose.x, alignment.pose.y) == pytest.approx((1.5, -2.0), abs=1e-9)
        assert alignment.pose.theta == pytest.approx(0.6, abs=1e-9)
        assert ate_rmse(est, gt).rmse < 1e-9

    def test_scale(self, rng):
        gt_xy = rng.uniform(-5, 5, size=(25, 2))
        alignment = align_points(0.5 * gt_xy, gt_xy, with_scale=True)
        assert alignment.scale == pytest.approx(2.0)
        assert np.allclose(alignment.apply(0.5 * gt_xy), gt_xy, atol=1e-9)
        assert align_points(0.5 * gt_xy, gt_xy).scale == 1.0

    def test_rigid_fit_is_the_minimum(self):
        for seed in range(100):
            generator = np.random.default_rng(seed)
            gt_xy = generator.uniform(-5, 5, size=(20, 2))
            offset = PoseSE2(*generator.uniform(-2, 2, 2), generator.uniform(-3, 3))
            est_xy = offset.apply(gt_xy) + generator.normal(0, 0.1, size=gt_xy.shape)
            best = align_points(est_xy, gt_xy)
            optimum = np.sum((best.apply(est_xy) - gt_xy) ** 2)
            for _ in range(5):
                dx, dy, dtheta = generator.normal(0, 1e-3, 3)
                nudged = Alignment(PoseSE2(best.pose.x + dx, best.pose.y + dy, best.pose.theta + dtheta))
                assert np.sum((nudged.apply(est_xy) - gt_xy) ** 2) >= optimum - 1e-12

    def test_too_few_or_coincident(self):
        with pytest.raises(InsufficientDataError):
            align_points(np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(DegenerateGeometryError):
            align_points(np.ones((5, 2)), np.arange(10.0).reshape(5, 2))


class TestAte:
    def test_identical(self):
        gt = _line(20)
        report = ate_rmse(gt, gt)
        assert report.rmse == pytest.approx(0.0, abs=1e-12)
        assert report.matched == 20

    def test_alternating_lateral_error(self):
        gt = _line(40)
        report = ate_rmse(_with_lateral(gt, [0.1, -0.1, -0.1, 0.1]), gt)
        assert report.rmse == pytest.approx(0.1, abs=1e-9)
        assert report.mean == pytest.approx(0.1, abs=1e-9)
        assert report.max == pytest.approx(0.1, abs=1e-9)
        assert len(report.per_frame_errors) == 40

    def test_unscaled_estimate_needs_scale(self):
        gt = _line(20)
        half = Trajectory([(t, PoseSE2(0.5 * p.x, 0.5 * p.y, p.theta)) for t, p in gt])
        assert ate_rmse(half, gt).rmse > 0.1
        assert ate_rmse(half, gt, with_scale=True).rmse < 1e-9

    def test_single_pose(self):
        with pytest.raises(InsufficientDataError):
            ate_rmse(_line(1), _line(1))

    def test_invariant_under_rigid_motion(self, rng):
        for _ in range(20):
            gt = _wander(rng)
            est = _noisy(rng, gt)
            reference = ate_rmse(est, gt).rmse
            motion = PoseSE2(*rng.uniform(-10, 10, 2), rng.uniform(-3, 3))
            assert ate_rmse(est.transformed(motion), gt).rmse == pytest.approx(reference, abs=1e-9)
            assert ate_rmse(est, gt.transformed(motion)).rmse == pytest.approx(reference, abs=1e-9)

    def test_roles_are_symmetric(self, rng):
        for _ in range(20):
            gt = _wander(rng)
            est = _noisy(rng, gt)
            assert ate_rmse(est, gt).rmse == pytest.approx(ate_rmse(gt, est).rmse, abs=1e-9)


class TestCorrectRate:
    def test_all_correct(self):
        gt = _line(16)
        report = correct_rate(gt, gt)
        assert report.correct_rate == 1.0 and report.total == 16

    def test_none_correct(self):
        gt = _line(16)
        assert correct_rate(_with_lateral(gt, [1.0, -1.0, -1.0, 1.0]), gt).correct_rate == 0.0

    def test_half_correct(self):
        gt = _line(32)
        est = _with_lateral(gt, [0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0])
        report = correct_rate(est, gt, epsilon=0.1)
        assert report.correct_rate == 0.5 and report.correct == 16

    def test_missing_estimates_count_against(self):
        gt = _line(10)
        est = Trajectory([(t, p) for k, (t, p) in enumerate(gt) if k < 5])
        assert correct_rate(est, gt).correct_rate == 0.5

    def test_no_overlap(self):
        gt = _line(5)
        est = Trajectory([(100.0 + k, PoseSE2.identity()) for k in range(5)])
        assert correct_rate(est, gt).correct_rate == 0.0

    def test_coincident_estimate_falls_back_to_identity(self):
        gt = Trajectory([(0.0, PoseSE2(0, 0, 0)), (1.0, PoseSE2(0.05, 0, 0))])
        est = Trajectory([(0.0, PoseSE2(0, 0, 0)), (1.0, PoseSE2(0, 0, 0))])
        assert correct_rate(est, gt).correct_rate == 1.0

    def test_empty_gt(self):
        with pytest.raises(InsufficientDataError):
            correct_rate(_line(3), Trajectory())

    def test_monotone_in_epsilon(self, rng):
        gt = _wander(rng)
        est = _noisy(rng, gt, sigma=0.2)
        rates = [correct_rate(est, gt, epsilon=e).correct_rate for e in np.linspace(0.01, 1.0, 40)]
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        assert rates[0] < rates[-1]


def test_associate_timestamps():
    gt = _line(5, dt=0.1)
    est = Trajectory([(0.01, PoseSE2()), (0.2, PoseSE2()), (0.36, PoseSE2())])
    assert associate_timestamps(est, gt) == [(0, 0), (1, 2), (2, 4)]
    assert associate_timestamps(Trajectory(), gt) == []


class TestTrackingReport:
    @staticmethod
    def _scene(frames=10):
        obj = ObjectSpec(size=(40.0, 40.0), path=ObjectPathSpec(start=(200.0, 150.0), velocity=(2.0, 0.0)))
        config = SceneConfig(frames=frames, landmark_count=0, objects=(obj,),
                             detector_noise=DetectorNoise(p_miss=0.0, p_false=0.0))
        return generate(config, 0)

    def test_perfect_output(self):
        scene = self._scene()
        output = [[(7, o.box) for o in frame.objects] for frame in scene.frames]
        report = tracking_report(output, scene)
        assert report.mean_iou_vs_gt == pytest.approx(1.0)
        assert report.id_switches == 0 and report.miss_frames == 0

    def test_fresh_id_every_frame(self):
        scene = self._scene()
        output = [[(frame.index + 1, o.box) for o in frame.objects] for frame in scene.frames]
        assert tracking_report(output, scene).id_switches == len(scene.frames) - 1

    def test_empty_output_misses_everything(self):
        scene = self._scene()
        report = tracking_report([[] for _ in scene.frames], scene)
        assert report.miss_frames == len(scene.frames)
        assert report.mean_iou_vs_gt == 0.0

    def test_occlusion_survival(self):
        base = SceneConfig(frames=40, landmark_count=0,
                           detector_noise=DetectorNoise(sigma_center=0.0, sigma_size=0.0, p_miss=0.0, p_false=0.0))
        scene = generate(scenario_occlusion_crossing(base, 6), 0)
        (event,) = scene.occlusion_events()

        def output(id_after):
            frames = []
            for frame in scene.frames:
                tracks = []
                for o in frame.objects:
                    if o.object_id == event.object_id:
                        if event.start <= frame.index < event.stop:
                            continue
                        tracks.append((id_after if frame.index >= event.stop else 2, o.box))
                    else:
                        tracks.append((1, o.box))
                frames.append(tracks)
            return frames

        kept = tracking_report(output(2), scene)
        assert kept.occlusion_survival == [(event.object_id, event.start, event.stop, True)]
        assert kept.all_occlusions_survived
        lost = tracking_report(output(3), scene)
        assert not lost.all_occlusions_survived
        assert math.isfinite(lost.mean_iou_vs_gt)
