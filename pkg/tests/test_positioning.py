import math

import numpy as np
import pytest

from uwbloc.positioning import (
    Anchor,
    DegenerateGeometryError,
    DivergenceError,
    NoValidFixError,
    PositionFix,
    RoomBounds,
    anchors_from_json,
    anchors_to_json,
    bancroft_solve,
    gauss_newton_refine,
    position_error,
    select_solution,
)

CORNERS = [
    Anchor("a0", (0.0, 0.0, 3.0)),
    Anchor("a1", (6.0, 0.0, 3.0)),
    Anchor("a2", (0.0, 6.0, 3.0)),
    Anchor("a3", (6.0, 6.0, 3.0)),
]
ROOM = RoomBounds((0.0, 0.0, 0.0), (6.0, 6.0, 3.0))


def ranges_from(anchors, truth):
    return [float(np.linalg.norm(np.asarray(a.position) - np.asarray(truth))) for a in anchors]


def random_geometry(rng, n_anchors=4):
    """Well-conditioned random anchors and an interior truth point."""
    while True:
        anchors = [
            Anchor(f"r{i}", tuple(rng.uniform(0.0, 10.0, size=3))) for i in range(n_anchors)
        ]
        truth = tuple(rng.uniform(2.0, 8.0, size=3))
        b = np.array([[*a.position, r] for a, r in zip(anchors, ranges_from(anchors, truth))])
        if np.linalg.cond(b) < 1e4:
            return anchors, truth


class TestBancroft:
    def test_symmetric_corner_case(self):
        fixes = bancroft_solve(CORNERS, [math.sqrt(27.0)] * 4)
        assert len(fixes) == 2
        positions = sorted([f.position for f in fixes], key=lambda p: p[2])
        assert np.allclose(positions[0], (3.0, 3.0, 0.0), atol=1e-9)
        assert np.allclose(positions[1], (3.0, 3.0, 6.0), atol=1e-9)
        for f in fixes:
            assert abs(f.clock_bias) < 1e-9

    def test_exact_recovery(self):
        truth = (1.0, 2.0, 0.0)
        fixes = bancroft_solve(CORNERS, ranges_from(CORNERS, truth))
        best = min(fixes, key=lambda f: position_error(f, truth))
        assert position_error(best, truth) < 1e-9
        assert abs(best.clock_bias) < 1e-9
        assert best.residual_rms < 1e-9

    def test_three_anchors_rejected(self):
        with pytest.raises(ValueError):
            bancroft_solve(CORNERS[:3], [1.0, 2.0, 3.0])

    def test_nonpositive_range_rejected(self):
        with pytest.raises(ValueError):
            bancroft_solve(CORNERS, [1.0, 2.0, 3.0, 0.0])

    def test_translation_equivariance(self, rng):
        anchors, truth = random_geometry(rng)
        shift = np.array([3.1, -2.2, 1.7])
        moved = [Anchor(a.id, tuple(np.asarray(a.position) + shift)) for a in anchors]
        base = bancroft_solve(anchors, ranges_from(anchors, truth))
        jolt = bancroft_solve(moved, ranges_from(moved, tuple(np.asarray(truth) + shift)))
        for f0, f1 in zip(base, jolt):
            assert np.allclose(np.asarray(f1.position) - np.asarray(f0.position), shift, atol=1e-9)

    def test_noiseless_exactness_random(self, rng):
        for _ in range(50):
            anchors, truth = random_geometry(rng)
            fixes = bancroft_solve(anchors, ranges_from(anchors, truth))
            err = min(position_error(f, truth) for f in fixes)
            assert err < 1e-9

    def test_coplanar_mirror_symmetry(self):
        truth = (1.5, 4.2, 0.7)
        fixes = bancroft_solve(CORNERS, ranges_from(CORNERS, truth))
        z = sorted(f.position[2] for f in fixes)
        # anchors share z=3, so candidates mirror across that plane
        assert z[0] + z[1] == pytest.approx(6.0, abs=1e-8)

    def test_five_anchors_least_squares(self, rng):
        anchors, truth = random_geometry(rng, n_anchors=5)
        fixes = bancroft_solve(anchors, ranges_from(anchors, truth))
        assert min(position_error(f, truth) for f in fixes) < 1e-8

    def test_degenerate_geometry(self):
        collinear = [Anchor(f"c{i}", (float(i), 0.0, 0.0)) for i in range(4)]
        with pytest.raises(DegenerateGeometryError):
            bancroft_solve(collinear, [1.0, 1.0, 1.0, 1.0])


class TestSelectSolution:
    def test_symmetric_case_selects_floor(self):
        fixes = bancroft_solve(CORNERS, [math.sqrt(27.0)] * 4)
        chosen = select_solution(fixes, ROOM)
        assert np.allclose(chosen.position, (3.0, 3.0, 0.0), atol=1e-9)
        assert chosen.selection_rule == "bounds"

    def test_single_in_bounds_unchanged(self):
        inside = PositionFix((1.0, 1.0, 1.0), 0.0, 0.1, 1)
        outside = PositionFix((9.0, 9.0, 9.0), 0.0, 0.05, 2)
        chosen = select_solution([inside, outside], ROOM)
        assert chosen.position == inside.position
        assert chosen.selection_rule == "bounds"

    def test_residual_tie_break(self):
        a = PositionFix((1.0, 1.0, 1.0), 0.0, 0.2, 1)
        b = PositionFix((2.0, 2.0, 2.0), 0.0, 0.05, 2)
        chosen = select_solution([a, b], ROOM)
        assert chosen.position == b.position
        assert chosen.selection_rule == "residual"

    def test_all_rejected(self):
        a = PositionFix((9.0, 0.0, 0.0), 0.0, 0.0, 1)
        b = PositionFix((0.0, 0.0, 9.0), 0.0, 0.0, 2)
        with pytest.raises(NoValidFixError):
            select_solution([a, b], ROOM)

    def test_tolerance_admits_boundary_jitter(self):
        low = PositionFix((3.0, 3.0, -0.05), 0.0, 0.0, 1)
        with pytest.raises(NoValidFixError):
            select_solution([low], ROOM)
        chosen = select_solution([low], ROOM, tolerance=0.1)
        assert chosen.position == low.position

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_solution([], ROOM)


class TestPositionError:
    def test_zero(self):
        assert position_error((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)) == 0.0

    def test_three_four_five(self):
        assert position_error((0.03, 0.04, 0.0), (0.0, 0.0, 0.0)) == pytest.approx(0.05)

    def test_diagonal(self):
        err = position_error((0.01, 0.01, 0.01), (0.0, 0.0, 0.0))
        assert err == pytest.approx(math.sqrt(3) * 0.01, rel=1e-12)


class TestGaussNewton:
    def test_matches_bancroft_from_center(self):
        truth = (1.7, 4.1, 0.4)
        ranges = ranges_from(CORNERS, truth)
        bancroft = min(bancroft_solve(CORNERS, ranges), key=lambda f: position_error(f, truth))
        refined = gauss_newton_refine(CORNERS, ranges, initial=(3.0, 3.0, 1.5))
        assert position_error(refined, bancroft.position) < 1e-8

    def test_initial_at_truth_converges_immediately(self):
        truth = (2.0, 2.0, 1.0)
        ranges = ranges_from(CORNERS, truth)
        fix = gauss_newton_refine(CORNERS, ranges, initial=truth)
        assert position_error(fix, truth) < 1e-9
        assert fix.residual_rms < 1e-9

    def test_inconsistent_ranges_leave_residual(self):
        truth = (2.0, 3.0, 0.5)
        ranges = ranges_from(CORNERS, truth)
        ranges[0] *= 2.0
        fix = gauss_newton_refine(CORNERS, ranges, initial=(3.0, 3.0, 1.5))
        assert fix.residual_rms > 0.01

    def test_agreement_under_range_noise(self, rng):
        for _ in range(20):
            anchors, truth = random_geometry(rng)
            ranges = np.asarray(ranges_from(anchors, truth)) + rng.normal(0.0, 0.01, size=4)
            fixes = bancroft_solve(anchors, list(ranges))
            chosen = min(fixes, key=lambda f: position_error(f, truth))
            refined = gauss_newton_refine(anchors, list(ranges), initial=chosen.position)
            assert position_error(refined, chosen.position) < 1e-6

    def test_divergence_guard(self):
        # starting exactly on an anchor makes the range residual Jacobian blow up
        ranges = ranges_from(CORNERS, (2.0, 2.0, 1.0))
        with pytest.raises(DivergenceError):
            gauss_newton_refine(CORNERS, ranges, initial=CORNERS[0].position)


class TestAnchorIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "anchors.json"
        anchors_to_json(CORNERS, path)
        back = anchors_from_json(path)
        assert back == CORNERS

    def test_anchor_validation(self):
        with pytest.raises(ValueError):
            Anchor("bad", (1.0, math.inf, 0.0))
        with pytest.raises(ValueError):
            RoomBounds((0.0, 0.0, 0.0), (6.0, 6.0, 0.0))
