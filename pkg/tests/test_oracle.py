import math

import numpy as np
import pytest

from coordlab import oracle as orc
from coordlab import prob_core as pc
from coordlab import region_solver as rs
from coordlab.coordination_code import (
    block_repeat,
    expected_tv_exact,
    expected_tv_monte_carlo,
)


class TestGridMinMi:
    def test_zero_radius_recovers_target(self, uniform_binary, identity_channel):
        rep = orc.grid_min_mi(uniform_binary, identity_channel, 0.0, 1e-3)
        assert abs(rep.optimum - 1.0) <= 1e-9
        assert np.allclose(rep.optimizer.rows, np.eye(2))

    def test_full_radius_reaches_zero(self, uniform_binary, identity_channel):
        rep = orc.grid_min_mi(uniform_binary, identity_channel, 1.0, 1e-2)
        assert rep.optimum <= 1e-12

    def test_matches_solver_at_tenth(self, uniform_binary, identity_channel):
        rep = orc.grid_min_mi(uniform_binary, identity_channel, 0.1, 1e-3)
        pt = rs.solve_two_node(uniform_binary, identity_channel, 0.1)
        assert abs(rep.optimum - pt.R1) <= 1e-3

    def test_solver_never_above_grid(self, uniform_binary):
        # the grid point set is a subset of the feasible set, so the true
        # minimum (solver side) can only be lower
        rng = np.random.default_rng(5)
        rows = rng.dirichlet((1.0, 1.0), size=2)
        tgt = pc.CondPmf(rows)
        for d in (0.05, 0.2):
            rep = orc.grid_min_mi(uniform_binary, tgt, d, 1e-3)
            pt = rs.solve_two_node(uniform_binary, tgt, d)
            assert pt.R1 <= rep.optimum + 1e-9

    def test_rejects_wide_instances(self):
        p0 = pc.Pmf(np.full(3, 1 / 3))
        tgt = pc.CondPmf(np.full((3, 3), 1 / 3))
        with pytest.raises(ValueError, match="free parameters"):
            orc.grid_min_mi(p0, tgt, 0.1, 1e-2)

    def test_reports_positive_bound(self, uniform_binary, identity_channel):
        rep = orc.grid_min_mi(uniform_binary, identity_channel, 0.1, 1e-2)
        assert rep.details["discretization_bound"] > 0.0
        assert rep.search_space_size > 0


class TestExhaustiveBestCode:
    def test_single_sample_identity_full_rate(self, uniform_binary, identity_joint):
        # with one sample the pair type is a point mass, TV 1/2 from the
        # diagonal target no matter which codeword is chosen
        rep = orc.exhaustive_best_code(uniform_binary, identity_joint, 1, 1.0)
        assert rep.optimum == pytest.approx(0.5)

    def test_single_sample_identity_zero_rate(self, uniform_binary, identity_joint):
        rep = orc.exhaustive_best_code(uniform_binary, identity_joint, 1, 0.0)
        assert rep.optimum == pytest.approx(0.75)
        assert rep.search_space_size == 2

    def test_optimum_non_increasing_in_rate(self, uniform_binary, identity_joint):
        vals = [
            orc.exhaustive_best_code(uniform_binary, identity_joint, 2, r).optimum
            for r in (0.0, 0.5, 1.0)
        ]
        assert vals == sorted(vals, reverse=True)

    def test_optimizer_value_matches(self, uniform_binary, identity_joint):
        rep = orc.exhaustive_best_code(uniform_binary, identity_joint, 3, 2 / 3)
        assert expected_tv_exact(
            rep.optimizer, uniform_binary, identity_joint
        ) == pytest.approx(rep.optimum, abs=1e-12)

    def test_guard_refuses_large_space(self, uniform_binary, identity_joint):
        with pytest.raises(ValueError, match="guard"):
            orc.exhaustive_best_code(uniform_binary, identity_joint, 6, 0.5, guard=10)

    def test_rate2_only_for_cascade(self, uniform_binary, identity_joint):
        with pytest.raises(ValueError, match="rate2"):
            orc.exhaustive_best_code(uniform_binary, identity_joint, 1, 1.0, rate2=0.5)

    def test_cascade_tiny(self, uniform_binary):
        mass = np.zeros((2, 2, 2))
        mass[0, 0, 0] = mass[1, 1, 1] = 0.5
        tgt = pc.JointPmf(mass)
        rep = orc.exhaustive_best_code(uniform_binary, tgt, 1, 1.0, rate2=1.0)
        assert rep.optimum == pytest.approx(0.5)
        assert rep.optimizer.rate2 == 1.0


class TestBlockRepeatOfOptimizer:
    def test_repeated_code_holds_its_tv(self, uniform_binary, identity_joint):
        rep = orc.exhaustive_best_code(uniform_binary, identity_joint, 2, 0.5)
        base_tv = rep.optimum
        rep4 = block_repeat(rep.optimizer, 4)
        sim = expected_tv_monte_carlo(
            rep4, uniform_binary, identity_joint, 4000, seed=17
        )
        assert sim.mean_tv <= base_tv + 3 * sim.standard_error


class TestConsistencyScan:
    def test_identity_scan_is_clean(self, uniform_binary, identity_channel):
        out = orc.theorem_consistency_scan(
            uniform_binary,
            identity_channel,
            n_grid=(1, 2),
            delta_grid=(0.0, 0.25, 1.0),
        )
        for key in (
            "rows",
            "slack_coefficient",
            "flag_count",
            "flags",
            "partial",
            "evaluated_codes",
            "budget",
        ):
            assert key in out
        assert out["flag_count"] == 0
        assert not out["partial"]
        assert len(out["rows"]) == 6

    def test_saturated_radius_row(self, uniform_binary, identity_channel):
        out = orc.theorem_consistency_scan(
            uniform_binary, identity_channel, n_grid=(1,), delta_grid=(1.0,)
        )
        row = out["rows"][0]
        assert row["frontier_rate"] <= 1e-9
        assert row["exhaustive_rate"] == 0.0
        assert row["deficit"] == 0.0

    def test_unreachable_radius_row(self, uniform_binary, identity_channel):
        # no single-sample code has pair type within TV 0 of the diagonal,
        # so the converse side of that row is vacuous
        out = orc.theorem_consistency_scan(
            uniform_binary, identity_channel, n_grid=(1,), delta_grid=(0.0,)
        )
        row = out["rows"][0]
        assert row["exhaustive_rate"] is None
        assert row["deficit"] is None
        assert not row["flagged"]
        assert abs(row["frontier_rate"] - 1.0) <= 1e-9

    def test_zero_budget_is_partial(self, uniform_binary, identity_channel):
        out = orc.theorem_consistency_scan(
            uniform_binary, identity_channel, n_grid=(1,), delta_grid=(0.5,), budget=0
        )
        assert out["partial"]
        assert out["rows"] == []
        assert out["evaluated_codes"] == 0

    def test_scan_is_deterministic(self, uniform_binary, identity_channel):
        kw = dict(n_grid=(1, 2), delta_grid=(0.25, 0.5), seed=3)
        a = orc.theorem_consistency_scan(uniform_binary, identity_channel, **kw)
        b = orc.theorem_consistency_scan(uniform_binary, identity_channel, **kw)
        assert a == b
