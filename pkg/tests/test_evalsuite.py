"""Detector exactness and metric behavior on oracle-rendered clips."""

import numpy as np
import pytest

from ctrlvid.errors import UndefinedMetricError, ValidationError
from ctrlvid.evalsuite import (
    DESK_SCORED_FRAMES,
    Detection,
    EvalReport,
    RequestedEntity,
    appearance_similarity,
    clip_feature,
    evaluate_records,
    frechet_feature_distance,
    oracle_detect,
    requested_from_record,
    timestep_for_frame,
    trajectory_ap,
)
from ctrlvid.synthworld import (
    Shape,
    WorldConfig,
    build_records,
    box_to_cells,
    cells_to_box,
    shape_mask,
)
from ctrlvid.synthworld.palette import NAMED_COLORS
from ctrlvid.synthworld.vocab import WORDS
from ctrlvid.tokenizer import VideoClip

H = W = 8
T_STEPS = 6
F_TRAIN = 11


def _paint(frame, color, shape, r1, c1, hc, wc):
    mask = shape_mask(Shape(shape), wc, hc)
    frame[r1 : r1 + hc, c1 : c1 + wc][mask] = color
    return frame


def _static_clip(frame):
    return VideoClip(np.tile(frame[None], (F_TRAIN, 1, 1)))


def _requested(color, shape, r1, c1, hc, wc):
    box = cells_to_box(r1, c1, r1 + hc, c1 + wc, H, W)
    return RequestedEntity(color, shape, np.tile(np.asarray(box), (T_STEPS, 1)))


def _occlusion_free(record):
    """Every requested entity fully visible in its own color at scored frames."""
    requested = requested_from_record(record)
    if not requested:
        return False
    for f in DESK_SCORED_FRAMES:
        frame = record.clip.frames[f]
        for e in requested:
            t = timestep_for_frame(f, e.boxes.shape[0])
            r1, c1, r2, c2 = box_to_cells(tuple(e.boxes[t]), H, W)
            mask = shape_mask(Shape(e.shape), c2 - c1, r2 - r1)
            if not (frame[r1:r2, c1:c2][mask] == e.color).all():
                return False
    return True


@pytest.fixture(scope="module")
def records():
    return build_records(7, 150, WorldConfig())


@pytest.fixture(scope="module")
def clean_records(records):
    picked = [r for r in records if _occlusion_free(r)]
    assert len(picked) >= 20
    return picked


class TestOracleDetect:
    def test_background_frame_is_empty(self):
        assert len(oracle_detect(np.zeros((H, W), dtype=np.uint8))) == 0

    @pytest.mark.parametrize("shape", ["square", "circle", "triangle"])
    @pytest.mark.parametrize("hc,wc", [(3, 3), (3, 4), (4, 3), (4, 4)])
    def test_single_entity_recovered_exactly(self, shape, hc, wc):
        frame = _paint(np.zeros((H, W), dtype=np.uint8), 21, shape, 2, 1, hc, wc)
        result = oracle_detect(frame)
        assert len(result) == 1
        det = result.entities[0]
        assert det.color == 21
        assert det.shape == shape
        assert det.box == cells_to_box(2, 1, 2 + hc, 1 + wc, H, W)

    def test_disjoint_entities_all_found(self):
        frame = np.zeros((H, W), dtype=np.uint8)
        _paint(frame, 4, "square", 0, 0, 3, 3)
        _paint(frame, 35, "triangle", 0, 5, 3, 3)
        _paint(frame, 14, "circle", 5, 4, 3, 4)
        got = {(d.color, d.shape, d.box) for d in oracle_detect(frame)}
        assert got == {
            (4, "square", cells_to_box(0, 0, 3, 3, H, W)),
            (35, "triangle", cells_to_box(0, 5, 3, 8, H, W)),
            (14, "circle", cells_to_box(5, 4, 8, 8, H, W)),
        }

    def test_merged_same_color_blob_is_unknown(self):
        # Two overlapping squares of one color form an L-shaped union.
        frame = np.zeros((H, W), dtype=np.uint8)
        _paint(frame, 9, "square", 0, 0, 3, 3)
        _paint(frame, 9, "square", 2, 2, 3, 3)
        result = oracle_detect(frame)
        assert len(result) == 1
        assert result.entities[0].shape == "unknown"
        assert result.entities[0].box == cells_to_box(0, 0, 5, 5, H, W)

    def test_diagonal_contact_does_not_merge(self):
        frame = np.zeros((H, W), dtype=np.uint8)
        frame[2, 2] = 9
        frame[3, 3] = 9
        result = oracle_detect(frame)
        # 4-connectivity splits them; solid 1x1 fragments read as squares.
        assert len(result) == 2
        assert all(d.shape == "square" for d in result)

    def test_same_shape_different_colors_stay_separate(self):
        frame = np.zeros((H, W), dtype=np.uint8)
        _paint(frame, 4, "square", 1, 1, 3, 3)
        _paint(frame, 5, "square", 1, 4, 3, 3)  # touching, different color
        assert {d.color for d in oracle_detect(frame)} == {4, 5}

    def test_rejects_non_2d_input(self):
        with pytest.raises(ValidationError, match="2d"):
            oracle_detect(np.zeros((3, H, W), dtype=np.uint8))

    def test_detect_matches_render_on_clean_scenes(self, clean_records):
        # Scenes can render entities the annotation pass dropped, so
        # detections may be a superset of the requested set.
        record = clean_records[0]
        for f in DESK_SCORED_FRAMES:
            requested = requested_from_record(record)
            detections = oracle_detect(record.clip.frames[f])
            assert len(detections) >= len(requested)
            for e in requested:
                t = timestep_for_frame(f, T_STEPS)
                cells = box_to_cells(tuple(e.boxes[t]), H, W)
                want = cells_to_box(*cells, H, W)
                assert any(
                    d.color == e.color and d.shape == e.shape and d.box == want
                    for d in detections
                )


class TestTimestepForFrame:
    def test_desk_mapping(self):
        owners = [timestep_for_frame(f, T_STEPS) for f in range(F_TRAIN)]
        assert owners == [0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]

    def test_clamps_to_last_step(self):
        assert timestep_for_frame(99, T_STEPS) == T_STEPS - 1


class TestTrajectoryAp:
    def test_ground_truth_scores_one(self, clean_records):
        for record in clean_records:
            assert trajectory_ap(record.clip, requested_from_record(record)) == 1.0

    def test_random_frames_score_chance_level(self, clean_records):
        rng = np.random.default_rng(11)
        values = []
        for record in clean_records[:50]:
            frames = rng.integers(0, 64, size=(F_TRAIN, H, W)).astype(np.uint8)
            values.append(trajectory_ap(VideoClip(frames), requested_from_record(record)))
        assert float(np.mean(values)) <= 0.02

    def test_no_requested_entities_is_undefined(self):
        clip = _static_clip(np.zeros((H, W), dtype=np.uint8))
        with pytest.raises(UndefinedMetricError):
            trajectory_ap(clip, [])

    def test_each_detection_matches_once(self):
        frame = _paint(np.zeros((H, W), dtype=np.uint8), 4, "square", 2, 2, 4, 4)
        clip = _static_clip(frame)
        one = _requested(4, "square", 2, 2, 4, 4)
        assert trajectory_ap(clip, [one, one]) == 0.5

    def test_wrong_color_or_shape_never_matches(self):
        frame = _paint(np.zeros((H, W), dtype=np.uint8), 4, "square", 2, 2, 4, 4)
        clip = _static_clip(frame)
        assert trajectory_ap(clip, [_requested(9, "square", 2, 2, 4, 4)]) == 0.0
        assert trajectory_ap(clip, [_requested(4, "circle", 2, 2, 4, 4)]) == 0.0

    def test_iou_threshold_is_half(self):
        frame = _paint(np.zeros((H, W), dtype=np.uint8), 4, "square", 2, 2, 4, 4)
        clip = _static_clip(frame)
        # One-cell shift: IoU 12/20 = 0.6; two cells: 8/24 = 1/3.
        assert trajectory_ap(clip, [_requested(4, "square", 2, 3, 4, 4)]) == 1.0
        assert trajectory_ap(clip, [_requested(4, "square", 2, 4, 4, 4)]) == 0.0

    def test_occluded_entity_stays_unmatched(self):
        # A later entity almost fully covers an earlier one; the survivor's
        # fragments cannot reach the IoU bar, so the hidden request scores 0.
        frame = np.zeros((H, W), dtype=np.uint8)
        _paint(frame, 4, "square", 2, 2, 4, 4)
        _paint(frame, 35, "square", 2, 3, 4, 4)
        clip = _static_clip(frame)
        requested = [_requested(4, "square", 2, 2, 4, 4), _requested(35, "square", 2, 3, 4, 4)]
        assert trajectory_ap(clip, requested) == 0.5

    def test_moving_entity_uses_per_timestep_boxes(self):
        frames = np.zeros((F_TRAIN, H, W), dtype=np.uint8)
        boxes = []
        for t in range(T_STEPS):
            c1 = t  # one cell right per timestep
            boxes.append(cells_to_box(2, c1, 5, c1 + 3, H, W))
        for f in range(F_TRAIN):
            t = timestep_for_frame(f, T_STEPS)
            _paint(frames[f], 14, "triangle", 2, t, 3, 3)
        moving = RequestedEntity(14, "triangle", np.asarray(boxes))
        assert trajectory_ap(VideoClip(frames), [moving]) == 1.0
        static = _requested(14, "triangle", 2, 0, 3, 3)
        assert trajectory_ap(VideoClip(frames), [static]) < 1.0


class TestAppearanceSimilarity:
    def _clip_and_refs(self, color=21, shape="circle"):
        frame = _paint(np.zeros((H, W), dtype=np.uint8), color, shape, 2, 2, 4, 4)
        clip = _static_clip(frame)
        entity = _requested(color, shape, 2, 2, 4, 4)
        ref = frame[2:6, 2:6].copy()
        return clip, [ref], [entity]

    def test_ground_truth_crops_score_exactly_one(self):
        clip, refs, entities = self._clip_and_refs()
        result = appearance_similarity(clip, refs, entities)
        assert result.mean == 1.0
        assert result.scored == 2 * 1
        assert result.skipped == 0

    def test_wrong_color_strictly_below_control(self):
        rng = np.random.default_rng(3)
        names = list(NAMED_COLORS.values())
        for _ in range(100):
            right, wrong = rng.choice(names, size=2, replace=False)
            clip, refs, entities = self._clip_and_refs(color=int(right))
            swapped = clip.frames.copy()
            swapped[swapped == right] = wrong
            same = appearance_similarity(clip, refs, entities).mean
            other = appearance_similarity(VideoClip(swapped), refs, entities).mean
            assert other < same

    def test_background_crop_skipped_with_count(self):
        clip, refs, entities = self._clip_and_refs()
        # Second entity points at empty background in every frame.
        entities = entities + [_requested(4, "square", 5, 5, 3, 3)]
        refs = refs + [_paint(np.zeros((3, 3), dtype=np.uint8), 4, "square", 0, 0, 3, 3)]
        result = appearance_similarity(clip, refs, entities)
        assert result.scored == 2
        assert result.skipped == 2

    def test_all_pairs_skipped_is_undefined(self):
        clip, _, entities = self._clip_and_refs()
        with pytest.raises(UndefinedMetricError, match="2 skipped"):
            appearance_similarity(clip, [None], entities)

    def test_length_mismatch_rejected(self):
        clip, refs, entities = self._clip_and_refs()
        with pytest.raises(ValidationError, match="reference crops"):
            appearance_similarity(clip, refs + [None], entities)


class TestFrechetFeatureDistance:
    def _solid_clips(self, color, n, seed):
        rng = np.random.default_rng(seed)
        clips = []
        for _ in range(n):
            r1, c1 = rng.integers(0, H - 4, size=2)
            frame = _paint(np.zeros((H, W), dtype=np.uint8), color, "square", r1, c1, 4, 4)
            clips.append(_static_clip(frame))
        return clips

    def test_identical_sets_score_zero(self, records):
        clips = [r.clip for r in records[:20]]
        assert frechet_feature_distance(clips, clips) <= 1e-8

    def test_symmetric(self, records):
        a = [r.clip for r in records[:15]]
        b = [r.clip for r in records[15:30]]
        d_ab = frechet_feature_distance(a, b)
        d_ba = frechet_feature_distance(b, a)
        assert d_ab > 0.0
        assert abs(d_ab - d_ba) <= 1e-8

    def test_disjoint_colors_separate(self):
        a = self._solid_clips(4, 20, seed=1)
        b = self._solid_clips(5, 20, seed=1)
        assert frechet_feature_distance(a, b) > 0.0

    def test_distance_grows_with_color_separation(self):
        # Corpora draw colors from 8-wide windows; sliding the window
        # shrinks the overlap, which should read as growing distance.
        def window_clips(base, seed):
            rng = np.random.default_rng(seed)
            clips = []
            for _ in range(30):
                color = int(rng.integers(base, base + 8))
                clips.append(self._solid_clips(color, 1, seed=int(rng.integers(1 << 30)))[0])
            return clips

        anchor = window_clips(4, seed=5)
        same = window_clips(4, seed=5)
        half = window_clips(8, seed=6)
        disjoint = window_clips(12, seed=7)
        d_same = frechet_feature_distance(anchor, same)
        d_half = frechet_feature_distance(anchor, half)
        d_far = frechet_feature_distance(anchor, disjoint)
        assert d_same == 0.0
        assert d_same < d_half < d_far

    def test_rejects_small_sets(self, records):
        clips = [r.clip for r in records[:4]]
        with pytest.raises(ValidationError, match=">= 2"):
            frechet_feature_distance(clips[:1], clips)
        with pytest.raises(ValidationError, match=">= 2"):
            frechet_feature_distance(clips, clips[:1])

    def test_rejects_frame_count_mismatch(self, records):
        short = [VideoClip(r.clip.frames[:6]) for r in records[:3]]
        full = [r.clip for r in records[:3]]
        with pytest.raises(ValidationError, match="frame count"):
            frechet_feature_distance(full, short)

    def test_clip_feature_layout(self, records):
        feat = clip_feature(records[0].clip)
        assert feat.shape == (F_TRAIN * (2 + 64),)
        frame0 = records[0].clip.frames[0]
        n_det = len(oracle_detect(frame0))
        assert feat[0] == n_det


class TestReportAndDrivers:
    def test_requested_from_record_fields(self, records):
        record = next(r for r in records if r.n_present > 0)
        requested = requested_from_record(record)
        assert len(requested) == record.n_present
        slots = np.flatnonzero(record.presence.any(axis=0))
        for entity, j in zip(requested, slots):
            color_name, shape_name = WORDS[int(record.description_ids[j])].split("-")
            assert entity.color == NAMED_COLORS[color_name]
            assert entity.shape == shape_name
            assert entity.boxes.shape == (T_STEPS, 4)
            assert (entity.boxes > 0).all() and (entity.boxes < 1).all()

    def test_requested_from_empty_record_is_empty(self, records):
        record = next(r for r in records if r.n_present == 0)
        assert requested_from_record(record) == []

    def test_evaluate_records_on_ground_truth(self, clean_records):
        clips = [r.clip for r in clean_records[:20]]
        report = evaluate_records(clips, clean_records[:20])
        assert report.ap_at_iou50 == 1.0
        assert report.clip_count == 20
        assert report.frechet_feature_distance <= 1e-8
        assert 0.5 < report.appearance_similarity <= 1.0

    def test_evaluate_records_length_mismatch(self, clean_records):
        with pytest.raises(ValidationError, match="clips for"):
            evaluate_records([clean_records[0].clip], clean_records[:2])

    def test_report_renders_aligned_rows(self):
        report = EvalReport(0.5, 0.25, 1.5, 10, crops_skipped=3)
        text = report.render()
        assert "ap_at_iou50" in text and "0.5000" in text
        assert text.count("\n") == 4

    def test_report_save_round_trip(self, tmp_path):
        report = EvalReport(1.0, 1.0, 0.0, 2)
        path = tmp_path / "report.txt"
        report.save(path)
        assert path.read_text().strip() == report.render()

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(ap_at_iou50=1.5, appearance_similarity=0.0, frechet_feature_distance=0.0, clip_count=2),
            dict(ap_at_iou50=0.5, appearance_similarity=-2.0, frechet_feature_distance=0.0, clip_count=2),
            dict(ap_at_iou50=0.5, appearance_similarity=0.0, frechet_feature_distance=-1.0, clip_count=2),
        ],
    )
    def test_report_validates_ranges(self, kwargs):
        with pytest.raises(ValidationError):
            EvalReport(**kwargs)
