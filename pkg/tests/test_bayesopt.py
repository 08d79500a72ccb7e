import numpy as np
import pytest

from esncast.bayesopt import (
    Observation,
    SearchSpace,
    expected_improvement,
    latin_hypercube,
    load_campaign_result,
    propose_next,
    repeat_campaigns,
    run_campaign,
)
from esncast.topology import GENERAL, LINE, HyperParams
from esncast.training import Schedule

SMALL_SCHEDULE = Schedule(t_transient=5.0, t_train=20.0, t_end=35.0, n_windows=10)


def bowl_history(space, points, center=0.5):
    history = []
    for x in points:
        hp = space.from_unit(x)
        x_eff = space.to_unit(hp)  # integer dimensions snap to their grid
        history.append(Observation(params=hp,
                                   objective=float(np.sum((x_eff - center) ** 2)),
                                   epsilon=1.0, seed=0))
    return history


class TestSearchSpace:
    def test_dims_depend_on_topology(self):
        assert SearchSpace(GENERAL).ndim == 5
        assert SearchSpace(LINE).ndim == 4

    def test_unit_round_trip(self):
        space = SearchSpace(GENERAL)
        hp = HyperParams(gamma=9.0, sigma=0.55, rho_in=0.9, k=4, rho_r=1.2)
        back = space.from_unit(space.to_unit(hp))
        assert back.k == hp.k
        for name in ("gamma", "sigma", "rho_in", "rho_r"):
            assert getattr(back, name) == pytest.approx(getattr(hp, name), rel=1e-12)

    def test_k_rounding(self):
        space = SearchSpace(GENERAL)
        hp = space.from_unit([0.5, 0.5, 0.5, 0.6, 0.5])
        assert hp.k == round(1 + 0.6 * 4)
        assert isinstance(hp.k, int)

    def test_from_unit_clips_to_box(self):
        space = SearchSpace(GENERAL)
        hp = space.from_unit([2.0, -1.0, 0.5, 0.5, 0.5])
        assert hp.in_bounds()


class TestLatinHypercube:
    def test_stratification(self, rng):
        n, d = 10, 4
        pts = latin_hypercube(n, d, rng)
        for j in range(d):
            strata = np.floor(pts[:, j] * n).astype(int)
            assert sorted(strata) == list(range(n))


class TestExpectedImprovement:
    def test_zero_spread_gives_zero(self):
        ei = expected_improvement(np.array([0.5]), np.array([0.0]), 1.0)
        assert ei[0] == 0.0

    def test_prefers_lower_mean(self):
        ei = expected_improvement(np.array([0.0, 1.0]), np.array([0.5, 0.5]), 1.0)
        assert ei[0] > ei[1]


class TestProposeNext:
    def test_empty_history_in_bounds(self, rng):
        space = SearchSpace(GENERAL)
        hp = propose_next([], space, rng)
        assert hp.in_bounds()

    def test_initial_design_consumed_in_order(self, rng):
        space = SearchSpace(LINE)
        design = latin_hypercube(4, space.ndim, rng)
        first = propose_next([], space, rng, n_init=4, init_design=design)
        assert first == space.from_unit(design[0])

    def test_degenerate_identical_objectives(self, rng):
        space = SearchSpace(LINE)
        pts = [np.full(space.ndim, v) for v in np.linspace(0.1, 0.9, 12)]
        history = [Observation(params=space.from_unit(x), objective=1.0,
                               epsilon=10.0, seed=0) for x in pts]
        hp = propose_next(history, space, rng, n_candidates=500)
        assert hp.in_bounds()

    def test_quadratic_bowl_proposal_near_center(self, rng):
        space = SearchSpace(LINE)
        design = latin_hypercube(50, space.ndim, np.random.default_rng(5))
        history = bowl_history(space, design)
        hp = propose_next(history, space, np.random.default_rng(6),
                          n_candidates=4000, gp_seed=1)
        dist = np.linalg.norm(space.to_unit(hp) - 0.5)
        assert dist <= 0.1 * np.sqrt(space.ndim)

    def test_gp_failure_falls_back_to_random(self, rng, monkeypatch, caplog):
        import esncast.bayesopt as bo

        def boom(*args, **kwargs):
            raise np.linalg.LinAlgError("synthetic failure")

        monkeypatch.setattr(bo, "_fit_gp", boom)
        space = SearchSpace(LINE)
        history = bowl_history(space, latin_hypercube(12, space.ndim, rng))
        with caplog.at_level("WARNING"):
            hp = propose_next(history, space, np.random.default_rng(3))
        assert hp.in_bounds()
        assert any("falling back" in r.message for r in caplog.records)


@pytest.mark.slow
class TestSurrogateSanity:
    def test_quadratic_box_minimization(self):
        # Pure optimizer check on a noiseless 5-d quadratic over the same
        # box: 100 iterations must come within 5% of the value range of the
        # minimum in nearly every repeat.
        space = SearchSpace(GENERAL)
        d = space.ndim
        f_max = 0.25 * d  # worst corner of the unit-box quadratic
        hits = 0
        n_repeats = 20
        for rep in range(n_repeats):
            design = latin_hypercube(10, d, np.random.default_rng(100 + rep))
            history = []
            for i in range(100):
                rng_i = np.random.default_rng((rep, i))
                hp = propose_next(history, space, rng_i, init_design=design,
                                  n_candidates=2000, gp_seed=1000 * rep + i)
                x = space.to_unit(hp)
                history.append(Observation(params=hp,
                                           objective=float(np.sum((x - 0.5) ** 2)),
                                           epsilon=1.0, seed=i))
            best = min(o.objective for o in history)
            if best <= 0.05 * f_max:
                hits += 1
        assert hits >= 18


@pytest.mark.slow
class TestCampaigns:
    def test_small_campaign_end_to_end(self, lorenz_sys, tmp_path):
        log = tmp_path / "campaign.jsonl"
        result = run_campaign(GENERAL, lorenz_sys, budget=12, master_seed=5,
                              schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)
        assert result.iterations == 12
        assert result.best_epsilon == min(o.epsilon for o in result.history)
        bests = np.minimum.accumulate([o.epsilon for o in result.history])
        assert np.all(np.diff(bests) <= 0)
        for obs in result.history:
            assert obs.params.in_bounds()
            assert isinstance(obs.params.k, int)
        # Budget 1 equals the single trial.
        single = run_campaign(GENERAL, lorenz_sys, budget=1, master_seed=5,
                              schedule=SMALL_SCHEDULE, n_nodes=40)
        assert single.best_epsilon == single.history[0].epsilon

    def test_log_resume_and_reload(self, lorenz_sys, tmp_path):
        log = tmp_path / "resume.jsonl"
        first = run_campaign(LINE, lorenz_sys, budget=6, master_seed=9,
                             schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)
        lines_before = log.read_text().splitlines()
        # Re-running with the same budget only replays the log.
        again = run_campaign(LINE, lorenz_sys, budget=6, master_seed=9,
                             schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)
        assert log.read_text().splitlines() == lines_before
        assert [o.to_json() for o in again.history] == [
            o.to_json() for o in first.history]
        # A larger budget resumes from the recorded history.
        extended = run_campaign(LINE, lorenz_sys, budget=9, master_seed=9,
                                schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)
        assert extended.iterations == 9
        assert [o.to_json() for o in extended.history[:6]] == [
            o.to_json() for o in first.history]
        loaded = load_campaign_result(log)
        assert loaded.best_epsilon == extended.best_epsilon

    def test_log_configuration_mismatch_rejected(self, lorenz_sys, tmp_path):
        log = tmp_path / "mismatch.jsonl"
        run_campaign(LINE, lorenz_sys, budget=3, master_seed=9,
                     schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)
        with pytest.raises(ValueError):
            run_campaign(LINE, lorenz_sys, budget=3, master_seed=10,
                         schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)

    def test_reproducibility(self, lorenz_sys, tmp_path):
        logs = []
        for run in range(2):
            log = tmp_path / f"repro_{run}.jsonl"
            run_campaign(GENERAL, lorenz_sys, budget=8, master_seed=21,
                         schedule=SMALL_SCHEDULE, n_nodes=40, log_path=log)
            logs.append(log.read_bytes())
        assert logs[0] == logs[1]

    def test_repeat_campaigns_stats(self, lorenz_sys):
        stats = repeat_campaigns(LINE, lorenz_sys, budget=4, n_repeats=2,
                                 seeds=[3, 4], schedule=SMALL_SCHEDULE, n_nodes=40)
        assert stats.best_epsilons.shape == (2,)
        assert stats.mean == pytest.approx(np.mean(stats.best_epsilons))
        # Identical seeds give identical campaigns, hence zero spread.
        same = repeat_campaigns(LINE, lorenz_sys, budget=4, n_repeats=2,
                                seeds=[3, 3], schedule=SMALL_SCHEDULE, n_nodes=40)
        assert same.std == 0.0


class TestObservationSerialization:
    def test_round_trip(self):
        hp = HyperParams(gamma=9.5, sigma=0.5, rho_in=0.4, k=2, rho_r=0.9)
        obs = Observation(params=hp, objective=-1.5, epsilon=10**-1.5,
                          seed=42, trained=True, iteration=7)
        back = Observation.from_json(obs.to_json())
        assert back.to_json() == obs.to_json()
        assert back.params == hp

    def test_budget_validation(self, lorenz_sys):
        with pytest.raises(ValueError):
            run_campaign(GENERAL, lorenz_sys, budget=0, master_seed=1)


class TestTrialFailureHandling:
    def test_failed_trial_recorded_saturated(self, lorenz_sys, monkeypatch):
        import esncast.bayesopt as bo
        from esncast.evaluation import EPSILON_CAP
        from esncast.integrate import IntegrationError

        real = bo.run_trial
        calls = {"n": 0}

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:
                raise IntegrationError("synthetic blowup", time=1.0)
            return real(*args, **kwargs)

        monkeypatch.setattr(bo, "run_trial", flaky)
        result = run_campaign(LINE, lorenz_sys, budget=3, master_seed=1,
                              schedule=SMALL_SCHEDULE, n_nodes=30)
        assert result.iterations == 3  # the campaign never aborts
        failed = result.history[1]
        assert not failed.trained
        assert failed.epsilon == EPSILON_CAP
        assert failed.objective == pytest.approx(3.0)
