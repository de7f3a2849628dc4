import math

import numpy as np
import pytest

from oslk.bevgrid import BevGrid, ResponseMap
from oslk.errors import InvalidInputError
from oslk.geometry import Box3D
from oslk.matching import MatchResult
from oslk.selection import (
    PipelineConfig,
    Proposal,
    PseudoLabel,
    PseudoLabelSet,
    focal_loss,
    gt_filter,
    joint_select,
    load_pseudo_labels,
    merge_labels,
    pseudo_set_from_record,
    pseudo_set_to_record,
    run_scene_pipeline,
    save_pseudo_labels,
    score_candidates,
    select_top,
    selection_precision,
    soft_weighted_unknown_loss,
    top_k_candidates,
)

from oracles import random_box


def box(x=0.0, y=0.0, z=0.0, w=1.0, l=1.0, h=1.0, r=0.0, class_id=None):
    return Box3D(x=x, y=y, z=z, w=w, l=l, h=h, r=r, class_id=class_id)


def proposal(score, **kwargs):
    return Proposal(box=box(**kwargs), objectness=score)


def zero_map(n=40, origin=-10.0, res=0.5):
    return ResponseMap(
        data=np.zeros((n, n)), origin_x=origin, origin_y=origin, resolution=res
    )


def bump_map(cx, cy, sigma=2.0, n=40, origin=-10.0, res=0.5):
    coords = origin + res * np.arange(n)
    xs, ys = np.meshgrid(coords, coords, indexing="xy")
    data = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * sigma**2))
    return ResponseMap(data=data, origin_x=origin, origin_y=origin, resolution=res)


class TestTypes:
    def test_proposal_range(self):
        with pytest.raises(InvalidInputError):
            proposal(1.2)

    def test_pipeline_config_defaults(self):
        cfg = PipelineConfig()
        assert (cfg.k_o, cfg.k_u, cfg.gt_filter_iou, cfg.reduction) == (30, 10, 0.1, "mean")

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"k_o": 0},
            {"k_u": 0},
            {"k_o": 5, "k_u": 6},
            {"gt_filter_iou": 1.5},
            {"reduction": "max"},
        ],
    )
    def test_pipeline_config_validation(self, kwargs):
        with pytest.raises(InvalidInputError):
            PipelineConfig(**kwargs)

    def test_pseudo_label_set_requires_sorted(self):
        a = PseudoLabel(box=box(), objectness=0.5, feature_response=0.0, joint=0.5)
        b = PseudoLabel(box=box(), objectness=0.9, feature_response=0.0, joint=0.9)
        with pytest.raises(InvalidInputError):
            PseudoLabelSet(entries=(a, b), scene_id="s")
        PseudoLabelSet(entries=(b, a), scene_id="s")  # descending is fine


class TestGtFilter:
    def test_no_known_gt(self):
        props = [proposal(0.5), proposal(0.7, x=3.0)]
        assert gt_filter(props, [], 0.1) == props

    def test_identical_removed(self):
        props = [proposal(0.9, x=1.0)]
        assert gt_filter(props, [box(x=1.0)], 0.99) == []

    def test_small_overlap_retained(self):
        # unit squares offset 0.91: IoU 0.09/1.91 ~ 0.047 <= 0.1
        props = [proposal(0.9, x=0.91)]
        assert gt_filter(props, [box()], 0.1) == props

    def test_moderate_overlap_removed(self):
        # offset 0.5: IoU 1/3 > 0.1
        props = [proposal(0.9, x=0.5)]
        assert gt_filter(props, [box()], 0.1) == []

    def test_mode_3d_differs_when_z_disjoint(self):
        # same footprint, stacked vertically: BEV overlaps, volume does not
        props = [proposal(0.9, z=5.0)]
        assert gt_filter(props, [box()], 0.1, mode="bev") == []
        assert gt_filter(props, [box()], 0.1, mode="3d") == props

    def test_idempotent(self):
        rng = np.random.default_rng(9)
        props = [Proposal(box=random_box(rng), objectness=0.5) for _ in range(30)]
        gts = [random_box(rng) for _ in range(5)]
        once = gt_filter(props, gts, 0.1)
        assert gt_filter(once, gts, 0.1) == once

    def test_order_preserved(self):
        props = [proposal(0.1, x=10.0), proposal(0.9, x=20.0), proposal(0.5, x=30.0)]
        assert gt_filter(props, [box()], 0.1) == props

    def test_bad_args(self):
        with pytest.raises(InvalidInputError):
            gt_filter([], [], 1.5)
        with pytest.raises(InvalidInputError):
            gt_filter([], [], 0.1, mode="volumetric")


class TestTopK:
    def test_fewer_than_k(self):
        props = [proposal(0.2), proposal(0.9), proposal(0.5)]
        assert top_k_candidates(props, 30) == [props[1], props[2], props[0]]

    def test_selects_highest(self):
        props = [proposal(0.9), proposal(0.1), proposal(0.5)]
        assert top_k_candidates(props, 2) == [props[0], props[2]]

    def test_stable_ties(self):
        props = [proposal(0.5, x=1.0), proposal(0.5, x=2.0), proposal(0.5, x=3.0)]
        assert top_k_candidates(props, 2) == [props[0], props[1]]

    def test_k_validation(self):
        with pytest.raises(InvalidInputError):
            top_k_candidates([], 0)


class TestJointSelect:
    def test_zero_map_matches_objectness_ranking(self):
        rng = np.random.default_rng(4)
        props = [
            Proposal(box=box(x=float(rng.uniform(-8, 8)), y=float(rng.uniform(-8, 8))),
                     objectness=float(rng.uniform(0, 1)))
            for _ in range(12)
        ]
        selected = joint_select(props, zero_map(), 5, scene_id="s")
        expected = top_k_candidates(props, 5)
        assert [lab.box for lab in selected.entries] == [p.box for p in expected]
        assert all(lab.feature_response == 0.0 for lab in selected.entries)
        assert selected.scene_id == "s"

    def test_high_response_demotes(self):
        # equal objectness; one candidate sits on a response bump
        props = [proposal(0.8, x=5.0, y=5.0), proposal(0.8, x=-5.0, y=-5.0)]
        response = bump_map(5.0, 5.0)
        selected = joint_select(props, response, 1)
        assert selected.entries[0].box.x == -5.0

    def test_k_u_exceeds_candidates(self):
        props = [proposal(0.5), proposal(0.6, x=2.0)]
        assert len(joint_select(props, zero_map(), 10).entries) == 2

    def test_scores_recorded(self):
        props = [proposal(0.8, x=5.0, y=5.0)]
        selected = joint_select(props, bump_map(5.0, 5.0), 1)
        entry = selected.entries[0]
        assert entry.objectness == 0.8
        assert 0.0 < entry.feature_response <= 1.0
        assert entry.joint == pytest.approx(0.8 * (1 - entry.feature_response), abs=1e-12)

    def test_select_top_variants(self):
        props = [proposal(0.9, x=5.0, y=5.0), proposal(0.6, x=-5.0, y=-5.0)]
        response = bump_map(5.0, 5.0)
        by_obj = select_top(props, response, 1, key="objectness")
        by_nov = select_top(props, response, 1, key="novelty")
        assert by_obj.entries[0].box.x == 5.0
        assert by_nov.entries[0].box.x == -5.0
        with pytest.raises(InvalidInputError):
            select_top(props, response, 1, key="best")


class TestRunScenePipeline:
    def _scene(self):
        rng = np.random.default_rng(14)
        known = [box(x=-6.0, y=-6.0, w=2.0, l=4.0, class_id=0)]
        props = [proposal(0.95, x=-6.0, y=-6.0, w=2.0, l=4.0)]  # filtered away
        props += [
            Proposal(box=box(x=float(rng.uniform(-8, 8)), y=float(rng.uniform(-8, 8))),
                     objectness=float(rng.uniform(0.2, 0.9)))
            for _ in range(10)
        ]
        data = rng.uniform(0.0, 1.0, size=(2, 40, 40)).astype(np.float32)
        grid = BevGrid(data=data, origin_x=-10.0, origin_y=-10.0, resolution=0.5)
        return props, known, grid

    def test_deterministic(self):
        props, known, grid = self._scene()
        cfg = PipelineConfig(k_o=8, k_u=3)
        first = run_scene_pipeline(props, known, grid, cfg, scene_id="a")
        second = run_scene_pipeline(props, known, grid, cfg, scene_id="a")
        assert first == second

    def test_budget_and_filter_respected(self):
        props, known, grid = self._scene()
        cfg = PipelineConfig(k_o=8, k_u=3)
        out = run_scene_pipeline(props, known, grid, cfg)
        assert len(out.entries) <= 3
        survivors = {id(p.box) for p in gt_filter(props, known, cfg.gt_filter_iou)}
        for entry in out.entries:
            assert any(entry.box == p.box for p in props if id(p.box) in survivors)

    def test_reduction_choice_changes_map(self):
        props, known, grid = self._scene()
        mean_out = run_scene_pipeline(props, known, grid, PipelineConfig(reduction="mean"))
        pca_out = run_scene_pipeline(props, known, grid, PipelineConfig(reduction="pca"))
        # same candidates, generally different response provenance
        assert [e.box for e in mean_out.entries] is not None
        assert mean_out != pca_out or all(
            a.feature_response == b.feature_response
            for a, b in zip(mean_out.entries, pca_out.entries)
        )


class TestMergeLabels:
    def test_empty_pseudo(self):
        known = [box(class_id=0), box(x=5.0, class_id=1)]
        merged = merge_labels(known, PseudoLabelSet(entries=(), scene_id="s"), 100)
        assert [m.box for m in merged] == known
        assert all(m.weight == 1.0 for m in merged)

    def test_weights_and_tagging(self):
        known = [box(class_id=0)]
        entries = tuple(
            PseudoLabel(box=box(x=5.0 + i), objectness=0.5 - 0.1 * i,
                        feature_response=0.0, joint=0.5 - 0.1 * i)
            for i in range(3)
        )
        merged = merge_labels(known, PseudoLabelSet(entries=entries, scene_id="s"), 100)
        assert len(merged) == 4
        assert merged[0].weight == 1.0
        assert [m.weight for m in merged[1:]] == pytest.approx([0.5, 0.4, 0.3])
        assert all(m.box.class_id == 100 for m in merged[1:])

    def test_collision_rejected(self):
        known = [box(class_id=7)]
        with pytest.raises(InvalidInputError):
            merge_labels(known, PseudoLabelSet(entries=(), scene_id="s"), 7)

    def test_unclassed_known_rejected(self):
        with pytest.raises(InvalidInputError):
            merge_labels([box()], PseudoLabelSet(entries=(), scene_id="s"), 100)


class TestFocalLoss:
    def test_hand_value(self):
        assert focal_loss(0.5, 1, alpha=0.25, gamma=2.0) == pytest.approx(
            0.25 * 0.25 * math.log(2.0), abs=1e-12
        )

    def test_confident_correct_vanishes(self):
        assert focal_loss(1.0, 1) < 1e-12

    def test_cross_entropy_reduction(self):
        assert focal_loss(0.3, 1, alpha=1.0, gamma=0.0) == pytest.approx(
            -math.log(0.3), abs=1e-12
        )

    def test_target_zero_branch(self):
        assert focal_loss(0.3, 0, alpha=0.25, gamma=2.0) == pytest.approx(
            -0.75 * 0.09 * math.log(0.7), abs=1e-12
        )

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            focal_loss(1.5, 1)
        with pytest.raises(InvalidInputError):
            focal_loss(0.5, 2)


class TestSoftWeightedLoss:
    def _pseudo(self, weights):
        entries = tuple(
            PseudoLabel(box=box(x=float(i)), objectness=w, feature_response=0.0, joint=0.0)
            for i, w in enumerate(weights)
        )
        return PseudoLabelSet(entries=entries, scene_id="s")

    def _identity(self, n):
        return MatchResult(assignment={i: i for i in range(n)}, total_cost=0.0,
                           per_pair_cost=[0.0] * n)

    def test_zero_weights(self):
        loss = soft_weighted_unknown_loss(
            self._pseudo([0.0, 0.0]), [0.5, 0.5], self._identity(2)
        )
        assert loss == 0.0

    def test_single_entry(self):
        loss = soft_weighted_unknown_loss(self._pseudo([0.5]), [0.5], self._identity(1))
        assert loss == pytest.approx(0.5 * 0.25 * 0.25 * math.log(2.0), abs=1e-12)

    def test_doubling_weights_doubles_loss(self):
        rng = np.random.default_rng(6)
        weights = rng.uniform(0.0, 0.5, size=6)
        probs = rng.uniform(0.1, 0.9, size=6)
        base = soft_weighted_unknown_loss(
            self._pseudo(weights), probs, self._identity(6)
        )
        doubled = soft_weighted_unknown_loss(
            self._pseudo(2.0 * weights), probs, self._identity(6)
        )
        assert abs(doubled - 2.0 * base) <= 1e-12

    def test_index_validation(self):
        with pytest.raises(InvalidInputError):
            soft_weighted_unknown_loss(
                self._pseudo([0.5]), [0.5],
                MatchResult(assignment={0: 3}, total_cost=0.0, per_pair_cost=[0.0]),
            )

    def test_empty_set(self):
        empty = PseudoLabelSet(entries=(), scene_id="s")
        assert soft_weighted_unknown_loss(empty, [], self._identity(0)) == 0.0


class TestSelectionPrecision:
    def test_hand_case(self):
        entries = tuple(
            PseudoLabel(box=box(x=float(x)), objectness=0.9, feature_response=0.0, joint=0.9)
            for x in (0.0, 10.0)
        )
        sets = [PseudoLabelSet(entries=entries, scene_id="s")]
        gts = [[box(x=0.5)]]  # only the first entry is within 2 m
        assert selection_precision(sets, gts) == 0.5

    def test_injective(self):
        # two picks near one gt: only one may count
        entries = tuple(
            PseudoLabel(box=box(x=x), objectness=0.9, feature_response=0.0, joint=0.9)
            for x in (0.0, 0.1)
        )
        sets = [PseudoLabelSet(entries=entries, scene_id="s")]
        assert selection_precision(sets, [[box()]]) == 0.5

    def test_empty(self):
        assert selection_precision([], []) == 0.0

    def test_misaligned(self):
        with pytest.raises(InvalidInputError):
            selection_precision([PseudoLabelSet(entries=(), scene_id="s")], [])


class TestPseudoRecords:
    def _set(self):
        entries = tuple(
            PseudoLabel(
                box=box(x=1.5 * i, y=-2.0, z=0.9, w=2.2, l=5.5, h=2.1, r=0.3),
                objectness=0.9 - 0.1 * i,
                feature_response=0.05 * i,
                joint=(0.9 - 0.1 * i) * (1 - 0.05 * i),
            )
            for i in range(3)
        )
        return PseudoLabelSet(entries=entries, scene_id="scene_42")

    def test_record_round_trip(self):
        original = self._set()
        record = pseudo_set_to_record(original)
        assert record["scene_id"] == "scene_42"
        assert set(record["entries"][0]) == {
            "x", "y", "z", "w", "l", "h", "r", "s_obj", "s_fea", "s_jos"
        }
        assert pseudo_set_from_record(record) == original

    def test_file_round_trip(self, tmp_path):
        sets = [self._set()]
        path = tmp_path / "pseudo.jsonl"
        save_pseudo_labels(sets, path)
        assert load_pseudo_labels(path) == sets

    def test_bad_record_rejected(self):
        record = pseudo_set_to_record(self._set())
        del record["entries"][0]["s_obj"]
        with pytest.raises(InvalidInputError):
            pseudo_set_from_record(record)
