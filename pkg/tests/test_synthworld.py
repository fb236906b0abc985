import numpy as np
import pytest

from ctrlvid.errors import FormatError
from ctrlvid.synthworld import (
    EntitySpec,
    PlacedEntity,
    SceneScript,
    Shape,
    WorldConfig,
    box_at_frame,
    box_iou,
    box_to_cells,
    build_record,
    build_records,
    caption_ids,
    color_name,
    extract_annotations,
    generate_scene,
    load_records,
    render_with_owner,
    sample_reference_crop,
    save_records,
    shape_mask,
    train_slice,
    vocab,
)

CFG = WorldConfig()


def make_script(entities, f_long=40, f_train=11, offset=10):
    return SceneScript(tuple(entities), (0,), f_long, f_train, offset, 8, 8, 64)


def placed(shape, color, size, start_cell, end_cell):
    w, h = size
    spec = EntitySpec(Shape(shape), color, size)
    def cell_box(rc):
        r, c = rc
        return (c / 8, r / 8, (c + w) / 8, (r + h) / 8)
    return PlacedEntity(spec, cell_box(start_cell), cell_box(end_cell))


class TestShapes:
    def test_templates_distinct_at_all_sizes(self):
        for w in (3, 4):
            for h in (3, 4):
                masks = [shape_mask(s, w, h) for s in Shape]
                for i in range(len(masks)):
                    for j in range(i + 1, len(masks)):
                        assert not np.array_equal(masks[i], masks[j])

    def test_templates_span_their_box(self):
        # Row 0, last row, col 0 and last col each contain a cell, so the
        # rasterized bounding box equals the placed rect for every shape.
        for s in Shape:
            for w in (3, 4):
                for h in (3, 4):
                    m = shape_mask(s, w, h)
                    assert m[0].any() and m[-1].any()
                    assert m[:, 0].any() and m[:, -1].any()

    def test_half_up_rounding_keeps_size(self):
        # A 3-cell-wide box sliding by fractional offsets always covers 3 cells.
        for off in np.linspace(0.0, 5.0 / 8.0, 41):
            r1, c1, r2, c2 = box_to_cells((off, 0.0, off + 3 / 8, 3 / 8), 8, 8)
            assert c2 - c1 == 3
            assert r2 - r1 == 3

    def test_iou_identity_and_disjoint(self):
        a = (0.0, 0.0, 0.5, 0.5)
        assert box_iou(a, a) == 1.0
        assert box_iou(a, (0.5, 0.5, 1.0, 1.0)) == 0.0


class TestSceneGeneration:
    def test_deterministic(self):
        assert generate_scene(42, CFG) == generate_scene(42, CFG)

    def test_zero_entities_renders_background(self):
        cfg = WorldConfig(count_weights=(1.0, 0.0, 0.0, 0.0, 0.0))
        frames, owner = render_with_owner(generate_scene(5, cfg))
        assert not frames.any()
        assert (owner == -1).all()

    def test_count_histogram_matches_weights(self):
        counts = np.zeros(5)
        for seed in range(1000):
            counts[len(generate_scene(seed, CFG).entities)] += 1
        for k, p in enumerate(CFG.count_weights):
            sigma = np.sqrt(1000 * p * (1 - p))
            assert abs(counts[k] - 1000 * p) <= 3 * sigma

    def test_colors_distinct_within_scene(self):
        for seed in range(50):
            cols = [e.spec.color for e in generate_scene(seed, CFG).entities]
            assert len(cols) == len(set(cols))

    def test_pairwise_mean_iou_bounded(self):
        for seed in range(50):
            s = generate_scene(seed, CFG)
            frames = [s.train_offset + f for f in (0, 1, 3, 5, 7, 9)]
            for i in range(len(s.entities)):
                for j in range(i + 1, len(s.entities)):
                    vals = [
                        box_iou(
                            box_at_frame(s.entities[i], f, s.f_long),
                            box_at_frame(s.entities[j], f, s.f_long),
                        )
                        for f in frames
                    ]
                    assert np.mean(vals) <= CFG.max_pair_iou + 1e-12

    def test_static_scene_is_single_frame(self):
        s = generate_scene(9, CFG, static=True)
        assert s.f_long == s.f_train == 1
        for e in s.entities:
            assert e.start_box == e.end_box


class TestRendering:
    def test_zorder_later_entity_wins(self):
        a = placed("square", 4, (4, 4), (2, 2), (2, 2))
        b = placed("square", 35, (3, 3), (2, 2), (2, 2))
        frames, owner = render_with_owner(make_script([a, b], f_long=1, f_train=1, offset=0))
        assert frames[0, 2, 2] == 35
        assert owner[0, 2, 2] == 1
        assert frames[0, 5, 5] == 4

    def test_lone_entity_box_matches_analytic(self):
        for seed in range(20):
            cfg = WorldConfig(count_weights=(0.0, 1.0, 0.0, 0.0, 0.0))
            s = generate_scene(seed, cfg)
            frames, _ = render_with_owner(s)
            for f in range(s.f_long):
                r1, c1, r2, c2 = box_to_cells(box_at_frame(s.entities[0], f, s.f_long), 8, 8)
                fg = np.argwhere(frames[f] != 0)
                assert fg[:, 0].min() == r1 and fg[:, 0].max() == r2 - 1
                assert fg[:, 1].min() == c1 and fg[:, 1].max() == c2 - 1


class TestAnnotations:
    def test_disjoint_entities_sorted_by_coverage(self):
        big = placed("square", 4, (4, 4), (0, 0), (0, 4))
        small = placed("square", 35, (3, 3), (5, 5), (5, 2))
        anns = extract_annotations(make_script([small, big]))
        assert [a.entity_index for a in anns] == [1, 0]
        assert anns[0].coverage > anns[1].coverage

    def test_heavily_overlapped_smaller_removed(self):
        # Same-path entities; the later-listed big one covers the small one.
        small = placed("square", 35, (3, 3), (2, 2), (2, 5))
        big = placed("square", 4, (4, 4), (2, 2), (2, 5))
        anns = extract_annotations(make_script([small, big]))
        assert [a.entity_index for a in anns] == [1]

    def test_boxes_are_exact_interpolants(self):
        s = generate_scene(11, WorldConfig(count_weights=(0.0, 0.0, 1.0, 0.0, 0.0)))
        anns = extract_annotations(s)
        for ann in anns:
            e = s.entities[ann.entity_index]
            for t, f in enumerate((0, 1, 3, 5, 7, 9)):
                expect = box_at_frame(e, s.train_offset + f, s.f_long)
                assert np.allclose(ann.boxes[t], expect, atol=0, rtol=0)

    def test_cap_at_n_max(self):
        # Five static entities with only grazing overlap: pipeline keeps four.
        spots = [(0, 0, 4), (0, 5, 9), (5, 0, 14), (5, 5, 21), (2, 2, 26)]
        ents = [placed("square", c, (3, 3), (r, cl), (r, cl)) for r, cl, c in spots]
        anns = extract_annotations(make_script(ents), n_max=4)
        assert len(anns) == 4


class TestReferenceCrops:
    def test_static_entity_crop_frame_independent(self):
        e = placed("circle", 21, (4, 4), (2, 2), (2, 2))
        s = make_script([e])
        frames, owner = render_with_owner(s)
        crops = [
            sample_reference_crop(s, frames, owner, 0, np.random.default_rng(k))[0]
            for k in range(10)
        ]
        for c in crops[1:]:
            assert np.array_equal(c, crops[0])

    def test_crop_uses_outside_span_frames_when_available(self):
        e = placed("square", 4, (3, 3), (0, 0), (5, 5))
        s = make_script([e], offset=10)
        frames, owner = render_with_owner(s)
        for k in range(20):
            crop, fallback = sample_reference_crop(s, frames, owner, 0, np.random.default_rng(k))
            assert not fallback
            assert crop.shape == (3, 3)
            assert (crop == 4).all()

    def test_fallback_flag_on_single_frame_scene(self):
        s = generate_scene(123, WorldConfig(count_weights=(0.0, 1.0, 0.0, 0.0, 0.0)), static=True)
        frames, owner = render_with_owner(s)
        crop, fallback = sample_reference_crop(s, frames, owner, 0, np.random.default_rng(0))
        assert fallback

    def test_crop_dominant_color_matches_entity(self):
        hits = 0
        for seed in range(100):
            cfg = WorldConfig(count_weights=(0.0, 1.0, 0.0, 0.0, 0.0))
            s = generate_scene(seed, cfg)
            frames, owner = render_with_owner(s)
            crop, _ = sample_reference_crop(s, frames, owner, 0, np.random.default_rng(seed))
            fg = crop[crop != 0]
            if fg.size and np.bincount(fg).argmax() == s.entities[0].spec.color:
                hits += 1
        assert hits == 100


class TestCaptions:
    def test_empty_scene(self):
        s = make_script([])
        ids = caption_ids(s, [], 16)
        words = [vocab.WORDS[i] for i in ids if i != vocab.PAD]
        assert words == ["an", "empty", "scene"]
        assert len(ids) == 16

    def test_four_entities_fill_prompt_exactly(self):
        ents = [
            placed("square", 4, (3, 3), (0, 0), (0, 0)),
            placed("circle", 35, (3, 3), (0, 5), (0, 5)),
            placed("triangle", 21, (3, 3), (5, 0), (5, 0)),
            placed("square", 57, (3, 3), (5, 5), (5, 5)),
        ]
        ids = caption_ids(make_script(ents), [0, 1, 2, 3], 16)
        assert (ids != vocab.PAD).all()
        assert vocab.WORDS[ids[-1]] == "moving"

    def test_all_ids_in_vocab_over_many_scenes(self):
        for seed in range(1000):
            s = generate_scene(seed, CFG)
            ids = caption_ids(s, list(range(len(s.entities))), 16)
            assert ids.min() >= 0 and ids.max() < vocab.VOCAB_SIZE


class TestRecords:
    def test_deterministic(self):
        a = build_record(3, 5, CFG)
        b = build_record(3, 5, CFG)
        assert np.array_equal(a.prompt_ids, b.prompt_ids)
        assert np.array_equal(a.boxes_q, b.boxes_q)
        assert np.array_equal(a.clip.frames, b.clip.frames)
        assert a.is_image == b.is_image

    def test_clip_always_train_length(self):
        for i in range(20):
            r = build_record(1, i, CFG)
            assert r.clip.f == CFG.f_train

    def test_image_records_are_static(self):
        found = False
        for i in range(40):
            r = build_record(2, i, CFG)
            if r.is_image:
                found = True
                assert (r.clip.frames == r.clip.frames[0]).all()
                assert np.array_equal(r.boxes_q[0], r.boxes_q[-1])
                if r.n_present:
                    assert r.crop_fallback
        assert found

    def test_image_fraction_near_config(self):
        flags = [build_record(7, i, CFG).is_image for i in range(300)]
        p = CFG.image_fraction
        sigma = np.sqrt(300 * p * (1 - p))
        assert abs(sum(flags) - 300 * p) <= 3 * sigma

    def test_present_slots_have_crops_and_descriptions(self):
        checked = 0
        for i in range(50):
            r = build_record(11, i, CFG)
            if r.n_present < 2:
                continue
            checked += 1
            present = r.presence.any(axis=0)
            for n in range(CFG.n_max):
                if present[n]:
                    assert r.crops[n] is not None
                    assert vocab.WORDS[r.description_ids[n]].count("-") == 1
                else:
                    assert r.crops[n] is None
                    assert r.description_ids[n] == 0
                    assert not r.boxes_q[:, n].any()
        assert checked > 10

    def test_box_corners_ordered_after_quantization(self):
        for i in range(30):
            r = build_record(13, i, CFG)
            present = r.presence.any(axis=0)
            q = r.boxes_q[:, present]
            assert (q[..., 0] <= q[..., 2]).all()
            assert (q[..., 1] <= q[..., 3]).all()

    def test_file_roundtrip(self, tmp_path):
        recs = build_records(21, 12, CFG)
        path = tmp_path / "d.frec"
        save_records(path, recs, CFG)
        back, meta = load_records(path)
        assert meta["count"] == 12
        assert meta["t_steps"] == 6
        for a, b in zip(recs, back):
            assert np.array_equal(a.prompt_ids, b.prompt_ids)
            assert np.array_equal(a.presence, b.presence)
            assert np.array_equal(a.boxes_q, b.boxes_q)
            assert np.array_equal(a.description_ids, b.description_ids)
            assert np.array_equal(a.clip.frames, b.clip.frames)
            assert a.crop_fallback == b.crop_fallback
            for ca, cb in zip(a.crops, b.crops):
                assert (ca is None) == (cb is None)
                if ca is not None:
                    assert np.array_equal(ca, cb)

    def test_truncated_file_rejected(self, tmp_path):
        recs = build_records(21, 3, CFG)
        path = tmp_path / "d.frec"
        save_records(path, recs, CFG)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError):
            load_records(path)
