"""Unit tests for decoding, aggregation and grouping."""

import numpy as np
import pytest

from heatreg.config import COCO_FLIP_PAIRS
from heatreg.errors import DimensionError, InvalidParameterError
from heatreg.models.grid import HeatmapStack
from heatreg.models.schemas.pose import Detection
from heatreg.services.decoder_grouper import (
    aggregate_heatmaps,
    decode_poses,
    export_poses,
    find_peaks,
    flip_merge,
    flip_permutation,
    group_by_tags,
    load_poses,
    parse_flip_pairs,
    refine_subpixel,
    resample_bilinear,
)
from heatreg.services.heatmap_codec import encode_gaussian
from tests.conftest import make_person


def spike(shape=(1, 8, 8), cells=(((0, 3, 5), 0.9),)) -> HeatmapStack:
    data = np.zeros(shape)
    for (k, j, i), value in cells:
        data[k, j, i] = value
    return HeatmapStack(data)


def det(channel, score, tag=None, x=0.0, y=0.0):
    return Detection(channel=channel, x=x, y=y, score=score, tag=tag)


class TestFindPeaks:
    """Tests for find_peaks."""

    def test_single_peak(self):
        found = find_peaks(spike())
        assert len(found) == 1
        assert (found[0].channel, found[0].x, found[0].y) == (0, 5.0, 3.0)
        assert found[0].score == 0.9

    def test_below_floor(self):
        assert find_peaks(spike(cells=(((0, 3, 5), 0.05),)), score_floor=0.1) == []

    def test_uniform_map_has_no_peaks(self):
        assert find_peaks(HeatmapStack.full((2, 6, 6), 0.5)) == []

    def test_horizontal_tie_keeps_earlier_cell(self):
        pred = spike(cells=(((0, 3, 5), 0.9), ((0, 3, 6), 0.9)))
        assert [(d.x, d.y) for d in find_peaks(pred)] == [(5.0, 3.0)]

    def test_vertical_tie_keeps_upper_cell(self):
        pred = spike(cells=(((0, 3, 5), 0.9), ((0, 4, 5), 0.9)))
        assert [(d.x, d.y) for d in find_peaks(pred)] == [(5.0, 3.0)]

    def test_four_way_tie_keeps_one_cell(self):
        cells = tuple(((0, j, i), 0.6) for j in (3, 4) for i in (5, 6))
        assert [(d.x, d.y) for d in find_peaks(spike(cells=cells))] == [(5.0, 3.0)]

    def test_border_peak(self):
        found = find_peaks(spike(cells=(((0, 0, 0), 0.7),)))
        assert [(d.x, d.y) for d in found] == [(0.0, 0.0)]

    def test_ordering_and_limit(self):
        pred = spike(
            shape=(2, 10, 10),
            cells=(((0, 1, 1), 0.3), ((0, 5, 5), 0.8), ((0, 8, 2), 0.5), ((1, 4, 4), 0.6)),
        )
        found = find_peaks(pred, max_per_channel=2)
        assert [(d.channel, d.score) for d in found] == [(0, 0.8), (0, 0.5), (1, 0.6)]

    def test_invalid_limit(self):
        with pytest.raises(InvalidParameterError):
            find_peaks(spike(), max_per_channel=0)


class TestRefineSubpixel:
    """Tests for refine_subpixel."""

    def test_shift_toward_larger_neighbor(self):
        pred = spike(cells=(((0, 3, 5), 0.9), ((0, 3, 6), 0.4), ((0, 2, 5), 0.2)))
        out = refine_subpixel(pred, det(0, 0.9, x=5.0, y=3.0))
        assert (out.x, out.y) == (5.25, 2.75)

    def test_symmetric_neighbors_do_not_move(self):
        out = refine_subpixel(spike(), det(0, 0.9, x=5.0, y=3.0))
        assert (out.x, out.y) == (5.0, 3.0)

    def test_border_axis_is_not_refined(self):
        pred = spike(cells=(((0, 0, 4), 0.9), ((0, 1, 4), 0.5), ((0, 0, 3), 0.3)))
        out = refine_subpixel(pred, det(0, 0.9, x=4.0, y=0.0))
        assert (out.x, out.y) == (3.75, 0.0)


class TestAggregation:
    """Tests for resampling and multi-scale averaging."""

    def test_same_size_is_identity(self, rng):
        stack = HeatmapStack(rng.uniform(size=(2, 5, 5)))
        assert np.array_equal(resample_bilinear(stack, (5, 5)).data, stack.data)

    def test_constant_survives_resampling(self):
        out = resample_bilinear(HeatmapStack.full((1, 4, 4), 0.3), (8, 8))
        assert out.shape == (1, 8, 8)
        assert np.allclose(out.data, 0.3)

    def test_average_of_constants(self):
        out = aggregate_heatmaps(
            [HeatmapStack.full((1, 8, 8), 0.2), HeatmapStack.full((1, 4, 4), 0.6)],
            (1, 8, 8),
        )
        assert np.allclose(out.data, 0.4)

    def test_empty_input(self):
        with pytest.raises(InvalidParameterError):
            aggregate_heatmaps([], (8, 8))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            aggregate_heatmaps([HeatmapStack.zeros((1, 4, 4)), HeatmapStack.zeros((2, 4, 4))], (4, 4))


class TestFlip:
    """Tests for flip merging."""

    def test_consistent_flip_restores_prediction(self, rng):
        pred = HeatmapStack(rng.uniform(size=(17, 6, 7)))
        perm = flip_permutation(COCO_FLIP_PAIRS, 17)
        flipped = HeatmapStack(pred.data[perm][:, :, ::-1])
        assert np.allclose(flip_merge(pred, flipped, COCO_FLIP_PAIRS).data, pred.data)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            flip_merge(HeatmapStack.zeros((1, 4, 4)), HeatmapStack.zeros((1, 4, 5)), [])

    def test_permutation_rejects_repeated_channel(self):
        with pytest.raises(InvalidParameterError):
            flip_permutation([(1, 2), (2, 3)], 4)

    def test_permutation_rejects_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            flip_permutation([(0, 9)], 4)

    def test_parse_pairs(self):
        assert parse_flip_pairs("coco") == list(COCO_FLIP_PAIRS)
        assert parse_flip_pairs("none") == []
        assert parse_flip_pairs("1-2, 3-4") == [(1, 2), (3, 4)]

    def test_parse_malformed(self):
        with pytest.raises(InvalidParameterError):
            parse_flip_pairs("1-2-3")


class TestGroupByTags:
    """Tests for greedy tag grouping."""

    def test_two_people(self):
        groups = group_by_tags(
            [det(0, 0.9, 3.0), det(0, 0.8, 6.0), det(1, 0.7, 6.1), det(1, 0.6, 2.9)],
            tag_threshold=1.0,
        )
        assert len(groups) == 2
        assert groups[0].keypoints[0].tag == 3.0
        assert groups[0].keypoints[1].tag == 2.9
        assert groups[1].keypoints[1].tag == 6.1

    def test_same_channel_never_shares_a_group(self):
        groups = group_by_tags([det(0, 0.9, 1.0), det(0, 0.8, 1.0)], tag_threshold=1.0)
        assert len(groups) == 2

    def test_far_tag_opens_new_group(self):
        groups = group_by_tags([det(0, 0.9, 0.0), det(1, 0.8, 5.0)], tag_threshold=1.0)
        assert len(groups) == 2

    def test_missing_tags_count_as_zero(self):
        groups = group_by_tags([det(0, 0.9), det(1, 0.8)], tag_threshold=1.0)
        assert len(groups) == 1
        assert groups[0].group_score == pytest.approx(0.85)

    def test_running_mean_tag(self):
        groups = group_by_tags([det(0, 0.9, 1.0), det(1, 0.8, 1.6)], tag_threshold=1.0)
        assert groups[0].group_tag == pytest.approx(1.3)

    def test_empty(self):
        assert group_by_tags([]) == []

    def test_separated_tags_recover_people(self, rng):
        """Any input order gives one group per person when tags are well separated."""
        for _ in range(20):
            n_people, channels = 3, 5
            dets = [
                det(k, float(rng.uniform(0.2, 1.0)), 3.0 * (p + 1) + float(rng.uniform(-0.2, 0.2)), x=float(p))
                for p in range(n_people)
                for k in range(channels)
            ]
            order = rng.permutation(len(dets))
            groups = group_by_tags([dets[i] for i in order], tag_threshold=1.0, num_keypoints=channels)
            assert len(groups) == n_people
            for group in groups:
                assert len({d.x for d in group.keypoints}) == 1


class TestDecodePoses:
    """Tests for decode_poses."""

    def test_tags_split_people(self):
        pred = spike(shape=(2, 12, 12), cells=(
            ((0, 2, 2), 0.9), ((1, 4, 2), 0.9), ((0, 2, 9), 0.5), ((1, 4, 9), 0.5),
        ))
        tags = np.zeros(pred.shape)
        tags[:, :, :6] = 3.0
        tags[:, :, 6:] = 6.0
        poses = decode_poses(pred, HeatmapStack(tags), tag_threshold=1.0)
        assert len(poses) == 2
        assert poses[0].group_score == pytest.approx(0.9)
        assert {d.x for d in poses[1].keypoints} == {9.0}

    def test_without_tags_everything_joins_one_group(self):
        pred = spike(shape=(2, 12, 12), cells=(((0, 2, 2), 0.9), ((1, 4, 9), 0.5)))
        poses = decode_poses(pred)
        assert len(poses) == 1
        assert poses[0].num_keypoints == 2

    def test_tag_shape_mismatch(self):
        with pytest.raises(DimensionError):
            decode_poses(spike(), HeatmapStack.zeros((1, 4, 4)))

    def test_keypoint_between_cells_is_decoded(self):
        pred = encode_gaussian([make_person(10.5, 20.0, num_keypoints=1)], 2.0, (1, 40, 40))
        poses = decode_poses(pred)
        assert len(poses) == 1
        kp = poses[0].keypoints[0]
        assert (kp.x, kp.y) == (10.25, 20.0)

    def test_export_and_load(self, tmp_path):
        pred = spike(shape=(2, 12, 12), cells=(((0, 2, 2), 0.9), ((1, 4, 9), 0.5)))
        poses = decode_poses(pred, refine=False)
        path = tmp_path / "poses.json"
        export_poses({3: poses}, path)
        loaded = load_poses(path)
        assert list(loaded) == [3]
        kps = loaded[3][0].keypoints
        assert (kps[0].x, kps[0].y, kps[0].score) == (2.0, 2.0, 0.9)
        assert (kps[1].x, kps[1].y) == (9.0, 4.0)
