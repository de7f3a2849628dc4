import math

import numpy as np
import pytest

from oslk.errors import InvalidInputError
from oslk.geometry import Box3D, iou3d
from oslk.matching import MatchResult
from oslk.objectness import (
    ObjectnessScore,
    ScoringConfig,
    center_distance,
    centerness_score,
    gaussian_kernel,
    objectness_loss,
    objectness_score,
    oln_style_score,
    scale_distance,
    scale_score,
)

from oracles import random_box


def box(x=0.0, y=0.0, z=0.0, w=1.0, l=1.0, h=1.0, r=0.0):
    return Box3D(x=x, y=y, z=z, w=w, l=l, h=h, r=r)


class TestScoringConfig:
    def test_defaults(self):
        cfg = ScoringConfig()
        assert cfg.tau_center == 0.5
        assert cfg.tau_scale == 0.05

    @pytest.mark.parametrize("kwargs", [{"tau_center": 0.0}, {"tau_scale": -1.0}])
    def test_rejects_nonpositive(self, kwargs):
        with pytest.raises(InvalidInputError):
            ScoringConfig(**kwargs)


class TestGaussianKernel:
    def test_zero_distance(self):
        assert gaussian_kernel(0.0, 0.5) == 1.0

    def test_unit_distance(self):
        assert gaussian_kernel(1.0, 0.5) == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_deep_tail(self):
        assert gaussian_kernel(4.0, 0.05) == pytest.approx(math.exp(-160.0), rel=1e-12)
        assert gaussian_kernel(4.0, 0.05) < 1e-69

    def test_rejects_bad_args(self):
        with pytest.raises(InvalidInputError):
            gaussian_kernel(1.0, 0.0)
        with pytest.raises(InvalidInputError):
            gaussian_kernel(-0.5, 0.5)

    def test_monotone_in_distance(self):
        values = [gaussian_kernel(d, 0.5) for d in np.linspace(0.0, 5.0, 40)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestCenterness:
    def test_identical(self):
        assert centerness_score(box(), box()) == 1.0

    def test_unit_offset(self):
        assert centerness_score(box(), box(x=1.0)) == pytest.approx(
            math.exp(-1.0), abs=1e-15
        )

    def test_l1_offset(self):
        # L1 distance (1,1,0) -> 2, squared 4, over 2*0.5
        assert centerness_score(box(), box(x=1.0, y=1.0)) == pytest.approx(
            math.exp(-4.0), abs=1e-15
        )

    def test_center_distance_is_l1(self):
        assert center_distance(box(), box(x=1.0, y=-2.0, z=0.5)) == pytest.approx(3.5)


class TestScaleScore:
    def test_identical(self):
        assert scale_score(box(w=2, l=3, h=4, r=0.3), box(w=2, l=3, h=4, r=0.3)) == 1.0

    def test_quarter_turn_unit_square(self):
        # rows differ by 4 in entrywise L1; exp(-16/0.1)
        a, b = box(), box(r=math.pi / 2)
        assert scale_distance(a, b) == pytest.approx(4.0, abs=1e-12)
        assert scale_score(a, b) == pytest.approx(math.exp(-160.0), rel=1e-9)

    def test_height_bump(self):
        a = box(w=2, l=3, h=4)
        b = box(w=2, l=3, h=4.1)
        assert scale_score(a, b) == pytest.approx(math.exp(-0.1), abs=1e-12)
        assert scale_score(a, b) == pytest.approx(0.9048374180359595, abs=1e-12)


class TestObjectnessScore:
    def test_identical(self):
        score = objectness_score(box(), box())
        assert (score.s_center, score.s_scale, score.s_obj) == (1.0, 1.0, 1.0)

    def test_geometric_mean_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            score = objectness_score(a, b)
            assert abs(score.s_obj - math.sqrt(score.s_center * score.s_scale)) <= 1e-12
            assert 0.0 <= score.s_obj <= 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            fwd, rev = objectness_score(a, b), objectness_score(b, a)
            assert fwd.s_obj == pytest.approx(rev.s_obj, abs=1e-12)

    def test_known_composition(self):
        # centerness exp(-1), perfect scale
        score = objectness_score(box(), box(x=1.0))
        assert score.s_obj == pytest.approx(math.sqrt(math.exp(-1.0)), abs=1e-12)

    def test_center_monotonicity(self):
        scores = [
            objectness_score(box(), box(x=d)).s_center for d in (0.0, 0.5, 1.0, 2.0)
        ]
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            base = objectness_score(a, b)
            dx, dy, dz = rng.uniform(-30, 30, size=3)
            a2 = Box3D(a.x + dx, a.y + dy, a.z + dz, a.w, a.l, a.h, a.r)
            b2 = Box3D(b.x + dx, b.y + dy, b.z + dz, b.w, b.l, b.h, b.r)
            moved = objectness_score(a2, b2)
            assert moved.s_obj == pytest.approx(base.s_obj, abs=1e-12)

    def test_score_container_validation(self):
        with pytest.raises(InvalidInputError):
            ObjectnessScore(s_center=1.5, s_scale=1.0, s_obj=1.0)


class TestObjectnessLoss:
    def _assignment(self, mapping):
        return MatchResult(
            assignment=dict(mapping),
            total_cost=0.0,
            per_pair_cost=[0.0] * len(mapping),
        )

    def test_zero_when_equal(self):
        assert objectness_loss([1.0, 0.5], [1.0, 0.5], self._assignment({0: 0, 1: 1})) == 0.0

    def test_single_term(self):
        assert objectness_loss([1.0], [0.7], self._assignment({0: 0})) == pytest.approx(0.3)

    def test_crossed_assignment(self):
        loss = objectness_loss([1.0, 1.0], [0.5, 0.9], self._assignment({0: 1, 1: 0}))
        assert loss == pytest.approx(0.6, abs=1e-12)

    def test_mean_reduction(self):
        loss = objectness_loss(
            [1.0, 1.0], [0.5, 0.9], self._assignment({0: 1, 1: 0}), reduction="mean"
        )
        assert loss == pytest.approx(0.3, abs=1e-12)

    def test_index_validation(self):
        with pytest.raises(InvalidInputError):
            objectness_loss([1.0], [1.0], self._assignment({0: 3}))
        with pytest.raises(InvalidInputError):
            objectness_loss([1.0], [1.0], self._assignment({2: 0}))

    def test_bad_reduction(self):
        with pytest.raises(InvalidInputError):
            objectness_loss([1.0], [1.0], self._assignment({0: 0}), reduction="max")


class TestOlnStyleScore:
    def test_identical(self):
        assert oln_style_score(box(), box()) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint(self):
        assert oln_style_score(box(), box(x=100.0)) == 0.0

    def test_half_offset_cubes(self):
        # centerness exp(-0.25), iou 1/3
        value = oln_style_score(box(z=0.5), box(x=0.5, z=0.5))
        assert value == pytest.approx(math.sqrt(math.exp(-0.25) / 3.0), abs=1e-12)

    def test_formula_consistency(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            expected = math.sqrt(centerness_score(a, b) * iou3d(a, b))
            assert oln_style_score(a, b) == pytest.approx(expected, abs=1e-12)
