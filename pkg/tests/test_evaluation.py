import numpy as np
import pytest

from esncast.evaluation import EPSILON_CAP, epsilon_single, evaluate_climate, forecast
from esncast.systems import Trajectory
from esncast.topology import HyperParams, Reservoir, build_reservoir
from esncast.training import Readout, Schedule, TrainRecord, fit_ridge, run_training

LAM = Schedule().lambda_target


def window_pair(rng, n_pts=111, offset=0.0):
    base = rng.normal(size=(n_pts, 3))
    truth = Trajectory(t0=5.0, dt=0.01, samples=base)
    pred = Trajectory(t0=5.0, dt=0.01, samples=base + offset)
    return truth, pred


class TestEpsilonSingle:
    def test_identical_trajectories(self, rng):
        truth, pred = window_pair(rng)
        assert epsilon_single(truth, truth, LAM) == 0.0

    def test_constant_offset_closed_form(self, rng):
        c = 0.25
        truth, pred = window_pair(rng, offset=c)
        got = epsilon_single(truth, pred, LAM)
        # 111 grid points inclusive: dt * lam * 111 = 1.005, so the result
        # sits within 2% of c * sqrt(3).
        assert got == pytest.approx(c * np.sqrt(3), rel=0.02)

    def test_uncorrelated_unit_variance_level(self):
        rng = np.random.default_rng(99)
        truth = Trajectory(t0=0.0, dt=0.01, samples=rng.normal(size=(111, 3)))
        pred = Trajectory(t0=0.0, dt=0.01, samples=rng.normal(size=(111, 3)))
        got = epsilon_single(truth, pred, LAM)
        assert got == pytest.approx(np.sqrt(6.0), rel=0.10)

    def test_misaligned_grids_rejected(self, rng):
        truth, pred = window_pair(rng)
        shifted = Trajectory(t0=pred.t0 + 0.005, dt=pred.dt, samples=pred.samples)
        with pytest.raises(ValueError):
            epsilon_single(truth, shifted, LAM)
        thinned = Trajectory(t0=pred.t0, dt=pred.dt, samples=pred.samples[:-1])
        with pytest.raises(ValueError):
            epsilon_single(truth, thinned, LAM)


def zero_record(schedule, n=8):
    n_test = schedule.index_of(schedule.t_end) - schedule.index_of(schedule.t_train) + 1
    zeros3 = np.zeros((n_test, 3))
    return TrainRecord(
        states=np.zeros((10, n)), targets=np.zeros((10, 3)),
        r_end_train=np.zeros(n),
        listening_states_test=np.zeros((n_test, n)),
        test_input=Trajectory(t0=schedule.t_train, dt=schedule.dt, samples=zeros3),
        schedule=schedule,
    )


def zero_reservoir(n=8, gamma=5.0):
    return Reservoir(n=n, w_r=np.zeros((n, n)), w_in=np.zeros((n, 3)),
                     gamma=gamma, fout_split=n // 2, seed=0)


class TestEvaluateClimate:
    def test_perfect_oracle_gives_zero(self):
        # A resting reservoir with a zero readout forecasts the zero signal
        # exactly, so every window error vanishes.
        sched = Schedule(t_transient=1.0, t_train=2.0, t_end=12.0, n_windows=5)
        record = zero_record(sched)
        readout = Readout(w_out=np.zeros((3, 8)), alpha=1e-5, fout_split=4)
        report = evaluate_climate(zero_reservoir(), readout, record,
                                  record.test_input)
        assert report.epsilon == 0.0
        assert not report.any_saturated

    def test_aggregation_identity(self, lorenz_sys):
        hp = HyperParams(gamma=8.0, sigma=0.6, rho_in=0.5, k=2, rho_r=0.6)
        res = build_reservoir(hp, n=40, seed=2)
        rec = run_training(res, lorenz_sys, Schedule(), ic_seed=4)
        readout = fit_ridge(rec.states, rec.targets, fout_split=res.fout_split)
        report = evaluate_climate(res, readout, rec, rec.test_input)
        assert report.epsilon**2 * 50 == pytest.approx(
            np.sum(report.epsilon_i**2), rel=1e-12)
        assert len(report.epsilon_i) == 50

    def test_no_training_leakage(self):
        sched = Schedule()
        starts = sched.start_times()
        assert np.all(starts > sched.t_train)
        assert starts[-1] + sched.horizon <= sched.t_end + 1e-9

    def test_saturation_on_nonfinite_output(self):
        sched = Schedule(t_transient=1.0, t_train=2.0, t_end=12.0, n_windows=5)
        record = zero_record(sched)
        # An overflowing readout drives the window error non-finite; the
        # window is charged the cap instead of aborting the evaluation.
        readout = Readout(w_out=np.full((3, 8), 1e308), alpha=1e-5, fout_split=4)
        record.listening_states_test[:] = 0.5
        report = evaluate_climate(zero_reservoir(), readout, record,
                                  record.test_input)
        assert report.saturated.all()
        assert np.all(report.epsilon_i == EPSILON_CAP)
        assert report.any_saturated

    def test_window_overrun_rejected(self):
        sched = Schedule(t_transient=1.0, t_train=2.0, t_end=12.0, n_windows=5)
        record = zero_record(sched)
        readout = Readout(w_out=np.zeros((3, 8)), alpha=1e-5, fout_split=4)
        truncated = Trajectory(t0=sched.t_train, dt=sched.dt,
                               samples=record.test_input.samples[:-200])
        with pytest.raises(ValueError):
            evaluate_climate(zero_reservoir(), readout, record, truncated)

    @pytest.mark.slow
    def test_noise_corrupted_readout_never_better(self, lorenz_sys):
        from esncast.experiments import REFERENCE_LORENZ_PARAMS

        res = build_reservoir(REFERENCE_LORENZ_PARAMS["general"], n=100, seed=3)
        rec = run_training(res, lorenz_sys, Schedule(), ic_seed=3)
        readout = fit_ridge(rec.states, rec.targets, fout_split=res.fout_split)
        base = evaluate_climate(res, readout, rec, rec.test_input).epsilon
        rng = np.random.default_rng(12)
        corrupted = []
        for _ in range(10):
            noisy = Readout(
                w_out=readout.w_out * (1 + 0.1 * rng.normal(size=readout.w_out.shape)),
                alpha=readout.alpha, fout_split=readout.fout_split)
            corrupted.append(
                evaluate_climate(res, noisy, rec, rec.test_input).epsilon)
        assert np.median(corrupted) >= base


class TestForecast:
    def test_zero_readout_forecasts_zero(self):
        res = zero_reservoir()
        readout = Readout(w_out=np.zeros((3, 8)), alpha=1e-5, fout_split=4)
        traj = forecast(res, readout, np.full(8, 0.3), 1.0)
        assert traj.samples.shape == (101, 3)
        assert not traj.samples.any()

    def test_duration_zero_single_sample(self):
        res = zero_reservoir()
        readout = Readout(w_out=np.zeros((3, 8)), alpha=1e-5, fout_split=4)
        traj = forecast(res, readout, np.zeros(8), 0.0)
        assert traj.samples.shape == (1, 3)

    def test_reservoir_decays_toward_rest(self):
        res = zero_reservoir(gamma=10.0)
        readout = Readout(w_out=np.zeros((3, 8)), alpha=1e-5, fout_split=4)
        from esncast.evaluation import _closed_loop_batch

        _, states, fail = _closed_loop_batch(res, readout, np.full(8, 0.9), 300, 0.01)
        assert fail[0] == -1
        assert np.max(np.abs(states[0, -1])) < 1e-10
