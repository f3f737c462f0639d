from __future__ import annotations

import numpy as np
import pytest

from gazetarget.dataset import (
    FRAME_H,
    FRAME_W,
    MANIFEST_COLUMNS,
    SPLITS,
    DatasetManifest,
    HeadState,
    RendererParams,
    SampleRecord,
    batches,
    build_location_table,
    generate,
    measure_pupil_offsets,
    pupil_offsets,
    render_sample,
    split_of,
    to_tensor,
)
from gazetarget.errors import EmptySplit, HeadOutOfFrame
from gazetarget.facedet import FaceBox
from gazetarget.geometry import CalibrationProfile, GazePointCm

from conftest import affine_fit_error

CAL = CalibrationProfile()
RP = RendererParams()


def centered_head(width=170.0):
    return HeadState(FRAME_W / 2, FRAME_H / 2, width)


def test_location_table():
    table = build_location_table(CAL)
    assert len(table) == 91 and sorted(table) == list(range(1, 92))
    assert len({(g.x, g.y) for g in table.values()}) == 91
    pitch = table[2].x - table[1].x
    assert pitch == pytest.approx(69.84 / 13) and pitch == pytest.approx(5.3723, abs=1e-4)
    for g in table.values():
        assert -34.92 < g.x < 34.92 and 0 < g.y < 39.28
    # half-pitch margins
    assert table[1].x == pytest.approx(-34.92 + pitch / 2)


def test_centered_zero_gaze_centers_pupils():
    frame, box = render_sample(GazePointCm(0, 0), centered_head(), 1)
    assert RP.head_bias(box) == pytest.approx((0, 0), abs=0.05)
    ox, oy = measure_pupil_offsets(frame)
    assert abs(ox) < 0.03 and abs(oy) < 0.03


def test_max_horizontal_offset_endpoint():
    box = FaceBox(FRAME_W / 2 - 85, FRAME_H / 2 - 106, 170, 212)
    assert pupil_offsets(GazePointCm(34.92, 0), box, RP) == pytest.approx((RP.max_offset, 0.0))


def test_render_is_deterministic():
    a = render_sample(GazePointCm(5, 12), HeadState(300, 230, 180), 77)
    b = render_sample(GazePointCm(5, 12), HeadState(300, 230, 180), 77)
    assert a == b
    assert a[0].pixels.shape == (FRAME_H, FRAME_W, 3)


def test_head_out_of_frame():
    with pytest.raises(HeadOutOfFrame):
        render_sample(GazePointCm(0, 0), HeadState(20, 240, 170), 0)


def test_pupils_follow_gaze():
    head = centered_head()
    left = measure_pupil_offsets(render_sample(GazePointCm(-20, 10), head, 2)[0])
    right = measure_pupil_offsets(render_sample(GazePointCm(20, 10), head, 2)[0])
    assert right[0] - left[0] == pytest.approx(40 * RP.gain, rel=0.1)


def test_renderer_is_affinely_invertible():
    assert affine_fit_error(300) <= 0.5


def test_generate_counts_and_invariants(small_dataset):
    m = small_dataset
    assert len(m.records) == 91
    table = build_location_table(CAL)
    for r in m.records:
        assert r.gaze_cm == table[r.location_index]
        assert (m.root / r.path).exists()
    assert {r.location_index for r in m.records} == set(range(1, 92))
    assert {r.split for r in m.records} <= set(SPLITS)


def test_record_count_multiplies(tmp_path, monkeypatch):
    # skip the pixels: counting only depends on the loops
    import gazetarget.dataset as D

    monkeypatch.setattr(D, "render_sample", lambda g, h, s, rp=RP: (None, FaceBox(0, 0, 1, 1)))
    monkeypatch.setattr(D, "crop_face", lambda f, b: type("C", (), {"image": None})())
    monkeypatch.setattr(D, "save_ppm", lambda f, p: None)
    m = generate(1, 5, 4, CAL, tmp_path)
    assert len(m.records) == 1820
    for s in range(5):
        assert {r.location_index for r in m.records if r.subject_id == s} == set(range(1, 92))


def test_split_fractions_at_10k():
    counts = {s: 0 for s in SPLITS}
    for i in range(10_000):
        counts[split_of(0, f"id{i}", i % 17)] += 1
    for s, frac in zip(SPLITS, (0.80, 0.15, 0.05)):
        assert abs(counts[s] / 10_000 - frac) <= 0.01


def test_split_by_subject_keeps_subjects_together():
    tags = {split_of(4, f"s07_l{l:02d}_f000", 7, by_subject=True) for l in range(1, 92)}
    assert len(tags) == 1


def test_manifest_round_trip_and_stability(small_dataset, tmp_path):
    m = small_dataset
    back = DatasetManifest.load(m.root)
    assert back.records == m.records
    assert back.meta == m.meta
    first_data_line = [l for l in (m.root / "manifest.csv").read_text().splitlines() if not l.startswith("#")][0]
    assert SampleRecord.from_row(first_data_line) == m.records[0]
    assert f"# columns: {MANIFEST_COLUMNS}" in (m.root / "manifest.csv").read_text()
    again = generate(3, 1, 1, CAL, tmp_path / "again")
    assert [r.split for r in again.records] == [r.split for r in m.records]
    assert (again.root / "manifest.csv").read_bytes() == (m.root / "manifest.csv").read_bytes()


def test_splits_disjoint_and_exhaustive(small_dataset):
    ids = [set(r.sample_id for r in small_dataset.split(s)) for s in SPLITS]
    assert sum(len(s) for s in ids) == len(small_dataset.records)
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])


def test_batches(small_dataset):
    recs = [
        SampleRecord(f"x{i}", r.path, r.bbox, r.gaze_cm, r.location_index, 0, "train")
        for i, r in enumerate((small_dataset.records * 2)[:100])
    ]
    m = DatasetManifest(recs, small_dataset.root, small_dataset.meta)
    sizes = [len(g) for _, _, g in batches(m, "train", 32)]
    assert sizes == [32, 32, 32, 4]
    a = [g.tolist() for _, _, g in batches(m, "train", 32, shuffle_seed=5)]
    b = [g.tolist() for _, _, g in batches(m, "train", 32, shuffle_seed=5)]
    assert a == b
    faces, bbox, _ = next(batches(m, "train", 8))
    assert faces.shape == (8, 3, 227, 227) and faces.dtype == np.float32
    assert bbox.shape == (8, 4)
    with pytest.raises(EmptySplit):
        next(batches(m, "val", 8))


def test_to_tensor_endpoints():
    img = np.zeros((1, 2, 2, 3), np.uint8)
    img[0, 0, 0] = 255
    t = to_tensor(img)
    assert t.shape == (1, 3, 2, 2)
    assert t[0, :, 0, 0].tolist() == [1.0, 1.0, 1.0] and t.min() == 0.0
