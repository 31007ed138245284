import json
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrobust.campaign import CampaignConfig, analyze, rank_average_selection, rim_cell, rim_grid, run
from qrobust.campaign.runner import ControllerRecord, search
from qrobust.consistency import RankVector, bin_ranks, tau_b
from qrobust.errors import DegenerateTauError, ValidationError
from qrobust.spin_model import ChainSpec, Controller, controller_fidelity, controller_from_record

from oracles import average_ranks

FIXTURE = Path(__file__).parent / "fixtures" / "reference_controller.json"

TOY = {
    "chain": {"M": 2, "source": 1, "target": 2},
    "sigma_sim_grid": [0.0, 0.05, 0.1],
    "n_samples": 20,
    "L": 3,
    "budget": 300,
    "seed": 5,
    "bootstrap": {"resamples": 20},
}


@pytest.fixture(scope="module")
def reference():
    return controller_from_record(json.loads(FIXTURE.read_text()))


@pytest.fixture(scope="module")
def toy_result():
    return run(CampaignConfig.from_dict(TOY))


class TestRimGrid:
    def test_zero_column_is_plain_infidelity(self):
        spec = ChainSpec(4, 1, 4)
        rng = np.random.default_rng(0)
        ctrls = [Controller(rng.uniform(-5, 5, 4), rng.uniform(1, 10)) for _ in range(4)]
        g = rim_grid(spec, ctrls, [0.0, 0.05], n_samples=10, seed=1, resamples=10)
        expect = [1 - controller_fidelity(spec, c) for c in ctrls]
        assert list(g["rim"][:, 0]) == expect
        assert np.array_equal(g["ci_lo"][:, 0], g["ci_hi"][:, 0])
        assert np.all((g["rim"] >= 0) & (g["rim"] <= 1))
        assert g["yields"].shape == (4, 2, 2)

    def test_golden_reference_cell(self, reference):
        spec, ctrl = reference
        c = rim_cell(spec, ctrl, 0.02, 100, 1, seed=2024, i=0, j=2)
        assert c.rim == 0.21652874504865915
        assert (c.ci_lo, c.ci_hi) == (0.1821452116804608, 0.252137321752988)
        assert c.yields == (0.15, 0.03)
        assert c.worst == 0.17081633279180658

    def test_cell_depends_on_position(self, reference):
        spec, ctrl = reference
        a = rim_cell(spec, ctrl, 0.02, 50, 1, seed=2024, i=0, j=2).rim
        assert a == rim_cell(spec, ctrl, 0.02, 50, 1, seed=2024, i=0, j=2).rim
        assert a != rim_cell(spec, ctrl, 0.02, 50, 1, seed=2024, i=1, j=2).rim
        assert a != rim_cell(spec, ctrl, 0.02, 50, 1, seed=2025, i=0, j=2).rim

    def test_thread_count_independent(self, reference):
        spec, ctrl = reference
        ctrls = [ctrl, Controller(np.zeros(5), 3.0), Controller(np.ones(5), 7.0)]
        a = rim_grid(spec, ctrls, [0.0, 0.03, 0.1], 30, seed=3, threads=1, resamples=20)
        b = rim_grid(spec, ctrls, [0.0, 0.03, 0.1], 30, seed=3, threads=4, resamples=20)
        for key in a:
            assert np.array_equal(a[key], b[key])

    def test_empty(self):
        with pytest.raises(ValidationError):
            rim_grid(ChainSpec(2), [], [0.0])


class TestSelection:
    def test_hand_grid(self):
        grid = np.array([
            [0.1, 0.2, 0.3],
            [0.2, 0.1, 0.5],
            [0.3, 0.3, 0.1],
            [0.4, 0.5, 0.2],
            [0.5, 0.4, 0.4],
        ])
        # column ranks (1,2,3,4,5), (2,1,3,5,4), (3,5,1,2,4) -> sums 6, 8, 7, 11, 13
        assert rank_average_selection(grid) == (0, 1)

    def test_dominant_controller_is_best(self):
        rng = np.random.default_rng(4)
        grid = rng.uniform(0.1, 1, (9, 5))
        grid[6] = 0.01
        assert rank_average_selection(grid)[0] == 6

    def test_identical_rows_break_to_lower_index(self):
        grid = np.array([[0.3, 0.4], [0.2, 0.5], [0.2, 0.5], [0.9, 0.9]])
        assert rank_average_selection(grid)[0] == 1

    def test_equal_sums_break_on_zero_noise_column(self):
        grid = np.array([[0.2, 0.1], [0.1, 0.2], [0.5, 0.5]])
        assert rank_average_selection(grid, [0.0, 0.1])[0] == 1
        # without a zero level the first column decides as well
        assert rank_average_selection(grid[:, ::-1], [0.1, 0.2])[0] == 0
        # the zero level need not be the first column
        assert rank_average_selection(grid[:, ::-1], [0.1, 0.0])[0] == 1

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_matches_rank_sum_oracle(self, L, S, seed):
        rng = np.random.default_rng(seed)
        grid = rng.integers(0, 4, (L, S)) / 4  # plenty of ties
        sums = [sum(col) for col in zip(*[average_ranks(grid[:, j]) for j in range(S)])]
        order = sorted(range(L), key=lambda i: (sums[i], grid[i, 0], i))
        assert rank_average_selection(grid, [0.0] + [0.1] * (S - 1)) == (order[0], order[(L - 1) // 2])

    def test_invalid(self):
        with pytest.raises(ValidationError):
            rank_average_selection(np.empty((0, 3)))


class TestRun:
    def test_toy_completes_quickly(self):
        start = time.perf_counter()
        result = run(CampaignConfig.from_dict(TOY))
        assert time.perf_counter() - start < 1.0
        assert result.rim.shape == (len(result.controllers), 3)

    def test_toy_contents(self, toy_result):
        r = toy_result
        spec = r.config.chain
        assert [rec.id for rec in r.controllers] == list(range(len(r.controllers)))
        objectives = [rec.objective for rec in r.controllers]
        assert objectives == sorted(objectives)
        for i, rec in enumerate(r.controllers):
            assert rec.objective == 1 - controller_fidelity(spec, rec.controller)
            assert r.rim[i, 0] == rec.objective
            assert r.config.bounds.contains(rec.controller)
        assert r.arim_curve[0].arim == np.mean(r.rim[:, 0])
        assert r.arim_curve[0].arim == np.mean(objectives)
        assert [a.sigma for a in r.arim_curve] == [0.0, 0.05, 0.1]
        assert r.metadata["config_hash"] and r.metadata["seed"] == 5
        assert r.arim_mean == pytest.approx(np.mean([a.arim for a in r.arim_curve]))

    def test_every_cell_recomputes_exactly(self, toy_result):
        r = toy_result
        cfg = r.config
        for i, rec in enumerate(r.controllers):
            for j, s in enumerate(cfg.sigma_sim_grid):
                c = rim_cell(cfg.chain, rec.controller, s, cfg.n_samples, cfg.p, cfg.seed, i, j,
                             cfg.bootstrap_resamples, cfg.confidence, cfg.yield_thresholds)
                assert (c.rim, c.ci_lo, c.ci_hi, c.worst) == (
                    r.rim[i, j], r.ci_lo[i, j], r.ci_hi[i, j], r.worst[i, j])

    def test_replay_identical(self, toy_result):
        again = run(CampaignConfig.from_dict(TOY), threads=3)
        assert np.array_equal(again.rim, toy_result.rim)
        assert np.array_equal(again.yields, toy_result.yields)
        assert [a.arim for a in again.arim_curve] == [a.arim for a in toy_result.arim_curve]
        assert [r.trajectory for r in again.controllers] == [r.trajectory for r in toy_result.controllers]

    def test_tau_row(self):
        cfg = CampaignConfig.from_dict({**TOY, "L": 5, "budget": 500})
        r = run(cfg)
        binned = bin_ranks(r.rim[:, 0], cfg.alpha)
        done = [t.sigma_j for t in r.tau]
        assert sorted(done + r.tau_degenerate) == list(cfg.sigma_sim_grid)
        for j, s in enumerate(cfg.sigma_sim_grid):
            if s in done:
                t = r.tau[done.index(s)]
                ref = tau_b(binned, RankVector(r.rim[:, j]))
                assert (t.tau, t.concordant, t.discordant) == (ref.tau, ref.concordant, ref.discordant)
                assert t.sigma_base == 0.0 and t.alpha == cfg.alpha
            else:
                with pytest.raises(DegenerateTauError):
                    tau_b(binned, RankVector(r.rim[:, j]))

    def test_single_controller_tau_is_degenerate(self):
        r = run(CampaignConfig.from_dict({**TOY, "L": 1}))
        assert r.tau == [] and r.tau_degenerate == [0.0, 0.05, 0.1]
        assert r.best_index == r.median_index == 0

    def test_checkpoints_follow_config(self):
        cfg = CampaignConfig.from_dict({**TOY, "checkpoint_every": 25})
        for rec in search(cfg):
            assert [c for c, _ in rec.trajectory][:4] == [25, 50, 75, 100]

    def test_analyze_bare_controllers(self, reference):
        spec, ctrl = reference
        cfg = CampaignConfig.from_dict({"sigma_sim_grid": [0.0, 0.02], "n_samples": 10,
                                        "bootstrap": {"resamples": 10}})
        r = analyze(cfg, [ctrl, Controller(np.zeros(5), 2.0)], spec=spec)
        assert [rec.id for rec in r.controllers] == [0, 1]
        assert r.best_index == 0
        with pytest.raises(ValidationError):
            analyze(cfg, [])

    def test_ensemble_objective_campaign(self):
        cfg = CampaignConfig.from_dict({
            **TOY, "objective": {"kind": "fixed_ensemble_rim", "sigma_train": 0.05, "k": 5},
        })
        records = search(cfg)
        assert records and all(rec.calls_used % 5 == 0 for rec in records)
        assert all(rec.calls_used <= cfg.per_run_budget for rec in records)

    def test_no_budget_for_a_single_call(self):
        cfg = CampaignConfig.from_dict({
            **TOY, "budget": 3, "objective": {"kind": "fixed_ensemble_rim", "k": 5},
        })
        with pytest.raises(ValidationError):
            run(cfg)

    def test_records_are_controller_records(self, toy_result):
        assert all(isinstance(rec, ControllerRecord) for rec in toy_result.controllers)
