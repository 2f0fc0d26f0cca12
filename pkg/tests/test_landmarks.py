import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eeprnet.landmarks import (
    FLIP_ORDER,
    TEMPLATE,
    AnnotationRecord,
    denormalize,
    derive_full_set,
    flip_landmarks,
    flip_left_to_right,
    nme,
    normalize,
    primary_of,
    read_annotation_csv,
    read_landmark_csv,
    write_annotation_csv,
    write_landmark_csv,
)

coords = arrays(np.float64, (9, 2), elements=st.floats(-1, 1))


def test_template_is_row_major_lattice():
    assert TEMPLATE[0].tolist() == [-1, -1] and TEMPLATE[2].tolist() == [1, -1] and TEMPLATE[8].tolist() == [1, 1]


def test_derive_full_set_reproduces_template():
    np.testing.assert_array_equal(derive_full_set(primary_of(TEMPLATE)), TEMPLATE)


def test_derived_points_are_midpoints(rng):
    p = rng.uniform(-1, 1, (5, 2))
    full = derive_full_set(p)
    np.testing.assert_allclose(full[3], (p[0] + p[3]) / 2)
    np.testing.assert_allclose(full[5], (p[2] + p[4]) / 2)
    np.testing.assert_allclose(full[7], (p[3] + p[4]) / 2)
    np.testing.assert_allclose(full[4], (full[7] + p[1]) / 2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (9, 2), elements=st.floats(0, 500)), st.integers(2, 600), st.integers(2, 600))
def test_normalize_round_trip(px, w, h):
    np.testing.assert_allclose(denormalize(normalize(px, w, h), w, h), px, atol=1e-9)


def test_normalize_endpoints_and_errors():
    np.testing.assert_allclose(normalize([[0, 0], [99, 49]], 100, 50), [[-1, -1], [1, 1]])
    with pytest.raises(ValueError):
        normalize([[0, 0]], 1, 10)


@settings(max_examples=50, deadline=None)
@given(coords)
def test_flip_is_an_involution(lm):
    np.testing.assert_array_equal(flip_landmarks(flip_landmarks(lm)), lm)


def test_flip_relabels_and_mirrors():
    flipped = flip_landmarks(TEMPLATE)
    np.testing.assert_array_equal(flipped, TEMPLATE)  # the template is mirror symmetric
    lm = TEMPLATE.copy()
    lm[0] = (-0.9, -0.8)
    out = flip_landmarks(lm)
    np.testing.assert_allclose(out[2], (0.9, -0.8))
    assert list(FLIP_ORDER) == [2, 1, 0, 5, 4, 3, 8, 7, 6]


def test_flip_image_pixels_follow_landmarks():
    img = np.zeros((5, 7))
    img[1, 1] = 1.0
    lm = TEMPLATE.copy()
    lm[0] = normalize([1, 1], 7, 5)
    out, flm = flip_left_to_right(img, lm)
    x, y = np.round(denormalize(flm[2], 7, 5)).astype(int)
    assert out[y, x] == 1.0


def test_nme_convention():
    gt = np.zeros((9, 2))
    pred = gt + np.array([0.02, 0.0])
    assert nme(pred, gt) == pytest.approx(1.0)
    assert nme(gt, gt) == 0.0


def test_landmark_csv_round_trip(tmp_path, rng):
    rows = [("a.png", rng.uniform(-1, 1, (9, 2))), ("b.png", rng.uniform(-1, 1, (9, 2)))]
    write_landmark_csv(tmp_path / "lm.csv", rows)
    back = read_landmark_csv(tmp_path / "lm.csv")
    for name, lm in rows:
        np.testing.assert_array_equal(back[name], lm)


def test_landmark_csv_reports_bad_line(tmp_path):
    p = tmp_path / "lm.csv"
    write_landmark_csv(p, [("a.png", np.zeros((9, 2)))])
    p.write_text(p.read_text() + "b.png,1,2\n")
    with pytest.raises(ValueError, match=r"lm.csv:3"):
        read_landmark_csv(p)


def test_annotation_csv_round_trip(tmp_path, rng):
    recs = [AnnotationRecord("x.png", rng.uniform(0, 100, (5, 2)))]
    write_annotation_csv(tmp_path / "ann.csv", recs)
    back = read_annotation_csv(tmp_path / "ann.csv")
    np.testing.assert_allclose(back[0].primary_px, recs[0].primary_px)
