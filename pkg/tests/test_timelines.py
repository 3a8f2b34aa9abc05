"""Interval timeline and annotation behavior."""

import numpy as np
import pytest

from crosstalk.timelines import Annotation, Timeline, frame_midpoints


def test_segments_sorted_and_merged():
    t = Timeline([(3.0, 4.0), (0.0, 1.0), (0.5, 2.0), (2.0, 2.5)])
    assert t.segments == ((0.0, 2.5), (3.0, 4.0))
    assert t.duration() == 3.5
    assert t.extent() == (0.0, 4.0)


def test_invalid_segments_rejected():
    with pytest.raises(ValueError):
        Timeline([(1.0, 1.0)])
    with pytest.raises(ValueError):
        Timeline([(2.0, 1.0)])
    with pytest.raises(ValueError):
        Timeline([(0.0, np.inf)])


def test_empty_timeline():
    t = Timeline()
    assert not t
    assert t.duration() == 0.0
    assert t.union(Timeline([(0, 1)])) == Timeline([(0, 1)])
    assert t.intersection(Timeline([(0, 1)])) == Timeline()
    assert not t.contains_times(np.array([0.0, 1.0])).any()


def test_set_operations_match_mask_arithmetic():
    rng = np.random.default_rng(20)
    step = 0.25
    for _ in range(50):
        def random_timeline():
            mask = rng.random(40) < 0.4
            return Timeline.from_mask(mask, step), mask

        a, ma = random_timeline()
        b, mb = random_timeline()
        assert a.union(b).to_mask(40, step).tolist() == (ma | mb).tolist()
        assert a.intersection(b).to_mask(40, step).tolist() == (ma & mb).tolist()
        assert a.complement(0.0, 40 * step).to_mask(40, step).tolist() == (~ma).tolist()


def test_contains_times_half_open():
    t = Timeline([(1.0, 2.0)])
    hits = t.contains_times(np.array([0.99, 1.0, 1.99, 2.0]))
    assert hits.tolist() == [False, True, True, False]


def test_crop_and_shift():
    t = Timeline([(0.0, 2.0), (3.0, 5.0)])
    assert t.crop(1.0, 4.0) == Timeline([(1.0, 2.0), (3.0, 4.0)])
    assert t.shift(2.0) == Timeline([(2.0, 4.0), (5.0, 7.0)])


def test_mask_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(25):
        mask = rng.random(64) < 0.5
        t = Timeline.from_mask(mask, 0.01, start_time=0.5)
        back = t.to_mask(64, 0.01, start_time=0.5)
        assert back.tolist() == mask.tolist()


def test_frame_midpoints_alignment():
    mids = frame_midpoints(4, 0.5, start_time=1.0)
    assert np.allclose(mids, [1.25, 1.75, 2.25, 2.75])


def test_annotation_speakers_and_support():
    ann = Annotation([(0, 2, "b"), (1, 3, "a"), (5, 6, "a")], uri="u1")
    assert ann.speakers() == ["a", "b"]
    assert ann.support() == Timeline([(0, 3), (5, 6)])
    assert ann.speaker_timeline("a") == Timeline([(1, 3), (5, 6)])
    assert ann.uri == "u1"


def test_overlap_timeline_counts_simultaneous_speakers():
    ann = Annotation([(0, 4, "a"), (2, 6, "b"), (3, 5, "c")])
    assert ann.overlap_timeline() == Timeline([(2, 5)])
    assert ann.count_timeline(3) == Timeline([(3, 4)])
    # a segment ending exactly where another starts is not an overlap
    ann2 = Annotation([(0, 2, "a"), (2, 4, "b")])
    assert ann2.overlap_timeline() == Timeline()


def test_annotation_crop_shift_rename():
    ann = Annotation([(0, 4, "a"), (2, 6, "b")], uri="u")
    cropped = ann.crop(1, 5)
    assert set(cropped) == {(1.0, 4.0, "a"), (2.0, 5.0, "b")}
    assert ann.shift(1.0).support() == Timeline([(1, 7)])
    assert ann.renamed({"a": "x"}).speakers() == ["b", "x"]


def test_annotation_mask_round_trip():
    rng = np.random.default_rng(11)
    speakers = ["s0", "s1", "s2"]
    for _ in range(20):
        masks = rng.random((3, 50)) < 0.4
        ann = Annotation.from_masks(speakers, masks, 0.02, start_time=0.1)
        names, back = ann.to_masks(50, 0.02, start_time=0.1, speakers=speakers)
        assert names == speakers
        assert np.array_equal(back, masks)


def test_to_masks_default_speaker_order_is_sorted():
    ann = Annotation([(0, 1, "z"), (1, 2, "a")])
    names, masks = ann.to_masks(4, 0.5)
    assert names == ["a", "z"]
    assert masks.shape == (2, 4)
