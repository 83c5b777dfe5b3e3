"""Greedy IoU association: id continuity, gaps, retirement, determinism."""

import random

import pytest

from sitewatch.streams import Detection, MachineClass
from sitewatch.tracking import IouTracker, Track, track_update

from helpers import make_detection, random_bbox


def test_single_machine_keeps_one_id_while_moving():
    tracker = IouTracker()
    ids = set()
    for f in range(10):
        det = make_detection(bbox=(100.0 + 2.0 * f, 200.0, 300.0, 150.0))
        assignment = tracker.update([det])
        ids.add(assignment[0])
    assert ids == {1}
    assert len(tracker.tracks) == 1


def test_distant_machines_of_different_classes_never_merge():
    tracker = IouTracker()
    for f in range(10):
        a = make_detection("excavator", (100.0, 100.0, 200.0, 100.0))
        b = make_detection("loader", (1200.0, 700.0, 200.0, 100.0))
        assignment = tracker.update([a, b])
        assert assignment == {0: 1, 1: 2}


def test_same_position_different_class_opens_a_new_track():
    tracker = IouTracker()
    box = (100.0, 100.0, 200.0, 100.0)
    tracker.update([make_detection("excavator", box)])
    assignment = tracker.update([make_detection("loader", box)])
    assert assignment == {0: 2}


def test_gap_shorter_than_miss_cap_keeps_the_id():
    tracker = IouTracker(miss_cap=25)
    box = (100.0, 100.0, 200.0, 100.0)
    assert tracker.update([make_detection(bbox=box)]) == {0: 1}
    for _ in range(24):
        assert tracker.update([]) == {}
    assignment = tracker.update([make_detection(bbox=(110.0, 100.0, 200.0, 100.0))])
    assert assignment == {0: 1}


def test_gap_reaching_miss_cap_retires_the_track():
    tracker = IouTracker(miss_cap=5)
    box = (100.0, 100.0, 200.0, 100.0)
    tracker.update([make_detection(bbox=box)])
    for _ in range(5):
        tracker.update([])
    assert tracker.tracks == []
    assignment = tracker.update([make_detection(bbox=box)])
    assert assignment == {0: 2}  # ids are never reused


def test_low_overlap_opens_a_new_track():
    tracker = IouTracker(iou_threshold=0.3)
    tracker.update([make_detection(bbox=(0.0, 0.0, 100.0, 100.0))])
    # Shifted far enough that IoU < 0.3.
    assignment = tracker.update([make_detection(bbox=(80.0, 0.0, 100.0, 100.0))])
    assert assignment == {0: 2}


def test_highest_iou_wins_the_match():
    tracker = IouTracker()
    tracker.update([make_detection(bbox=(0.0, 0.0, 100.0, 100.0))])
    near = make_detection(bbox=(5.0, 0.0, 100.0, 100.0))
    far = make_detection(bbox=(40.0, 0.0, 100.0, 100.0))
    assignment = tracker.update([far, near])
    assert assignment[1] == 1  # the closer box continues the track
    assert assignment[0] == 2


def test_assignment_is_a_partial_injection():
    rng = random.Random(17)
    tracker = IouTracker()
    for _ in range(60):
        detections = [
            Detection(
                rng.choice([MachineClass.EXCAVATOR, MachineClass.LOADER]),
                random_bbox(rng, 800, 600, 200.0),
                rng.uniform(0.1, 1.0),
            )
            for _ in range(rng.randrange(0, 5))
        ]
        assignment = tracker.update(detections)
        assert set(assignment.keys()) == set(range(len(detections)))
        ids = list(assignment.values())
        assert len(ids) == len(set(ids))


def test_update_is_independent_of_detection_order():
    boxes = [
        (0.0, 0.0, 100.0, 100.0),
        (300.0, 0.0, 100.0, 100.0),
        (600.0, 0.0, 100.0, 100.0),
    ]
    t1 = IouTracker()
    t1.update([make_detection(bbox=b) for b in boxes])
    a1 = t1.update([make_detection(bbox=(b[0] + 5, b[1], b[2], b[3])) for b in boxes])
    t2 = IouTracker()
    t2.update([make_detection(bbox=b) for b in boxes])
    reordered = [2, 0, 1]
    a2 = t2.update(
        [make_detection(bbox=(boxes[i][0] + 5, boxes[i][1], boxes[i][2], boxes[i][3])) for i in reordered]
    )
    # The same physical box gets the same id regardless of list position.
    for pos, i in enumerate(reordered):
        assert a2[pos] == a1[i]


def test_track_update_wrapper_returns_live_tracks():
    tracker = IouTracker()
    tracks, assignment = track_update(tracker, [make_detection()])
    assert assignment == {0: 1}
    assert len(tracks) == 1
    assert isinstance(tracks[0], Track)
    assert tracks[0].cls is MachineClass.EXCAVATOR


def test_constructor_validation():
    with pytest.raises(ValueError):
        IouTracker(iou_threshold=-0.1)
    with pytest.raises(ValueError):
        IouTracker(miss_cap=0)
