"""Unit tests for the pose schemas."""

import pytest

from heatreg.models.schemas.pose import Detection, PoseGroup


def group(*dets: Detection, num_keypoints: int = 3) -> PoseGroup:
    pose = PoseGroup.empty(num_keypoints)
    for det in dets:
        pose.add(det)
    return pose


class TestResultEntries:
    """Tests for to_result and from_result."""

    def test_empty_slots_are_marked_invisible(self):
        entry = group(Detection(channel=1, x=4.0, y=5.0, score=0.7)).to_result(image_id=2)
        assert entry["image_id"] == 2
        assert entry["visibility"] == [0, 1, 0]
        assert entry["keypoints"][3:6] == [4.0, 5.0, 0.7]

    def test_zero_score_detection_survives_reload(self):
        pose = group(
            Detection(channel=0, x=1.0, y=2.0, score=0.0),
            Detection(channel=2, x=3.0, y=4.0, score=0.5),
        )
        back = PoseGroup.from_result(pose.to_result())
        assert back.keypoints[0] == Detection(channel=0, x=1.0, y=2.0, score=0.0)
        assert back.keypoints[1] is None
        assert back.keypoints[2].score == 0.5
        assert back.group_score == pytest.approx(0.25)

    def test_entry_without_visibility_uses_score(self):
        entry = {"keypoints": [1.0, 2.0, 0.0, 3.0, 4.0, 0.9], "score": 0.9}
        back = PoseGroup.from_result(entry)
        assert back.keypoints[0] is None
        assert back.keypoints[1].x == 3.0

    def test_visibility_length_mismatch(self):
        with pytest.raises(ValueError):
            PoseGroup.from_result({"keypoints": [0.0] * 6, "visibility": [1]})

    def test_keypoints_not_multiple_of_three(self):
        with pytest.raises(ValueError):
            PoseGroup.from_result({"keypoints": [0.0] * 4})
