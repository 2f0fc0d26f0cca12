import csv

import numpy as np
import pytest

from eeprnet.landmarks import TEMPLATE, primary_of
from eeprnet.synth import (
    MANIFEST_FIELDS,
    Dataset,
    GenerationError,
    Nuisance,
    NuisanceRanges,
    PalmIdentity,
    _rescale_counts,
    draw_nuisance,
    draw_sample_counts,
    generate_dataset,
    invert_warp,
    load_dataset,
    load_image,
    manifest_hash,
    ncc,
    render_sample,
    roundtrip_ncc,
    sample_transform,
    save_image,
)


def test_identity_is_deterministic_and_distinct():
    a = PalmIdentity.from_seed(3, seed=1).canonical_image(32)
    b = PalmIdentity.from_seed(3, seed=1).canonical_image(32)
    c = PalmIdentity.from_seed(4, seed=1).canonical_image(32)
    np.testing.assert_array_equal(a, b)
    assert ncc(a, c) < 0.9


def test_zero_nuisance_places_template_by_similarity():
    nz = Nuisance.zero(side=64, scale=0.4)
    lm = sample_transform(nz)(TEMPLATE)
    np.testing.assert_allclose(lm, TEMPLATE * 0.4, atol=1e-9)


def test_invert_warp_round_trip(rng):
    nu = draw_nuisance(NuisanceRanges(), rng)
    warp = sample_transform(nu)
    u = rng.uniform(-1, 1, (50, 2))
    back, ok = invert_warp(warp, warp(u))
    assert ok.all()
    np.testing.assert_allclose(back, u, atol=1e-8)


def test_render_sample_contract(rng):
    ident = PalmIdentity.from_seed(0)
    nu = draw_nuisance(NuisanceRanges(), rng)
    try:
        s = render_sample(ident, nu, rng)
    except GenerationError:
        pytest.skip("drawn nuisance pushed a landmark out of frame")
    assert s.image.dtype == np.uint8 and s.image.shape == (nu.side, nu.side, 3)
    assert set(np.unique(s.mask)) <= {0, 255}
    assert np.abs(s.landmarks).max() <= 0.97
    np.testing.assert_allclose(s.primary_px, (primary_of(s.landmarks) + 1) * (nu.side - 1) / 2)


def test_render_rejects_out_of_frame():
    nu = Nuisance.zero(side=64, scale=0.3)
    nu.translation = (0.9, 0.0)
    with pytest.raises(GenerationError):
        render_sample(PalmIdentity.from_seed(0), nu)


def test_roi_round_trip_recovers_texture(rng):
    ident = PalmIdentity.from_seed(1)
    nu = Nuisance.zero(side=160, scale=0.35)
    nu.noise = 0.0
    s = render_sample(ident, nu)
    assert roundtrip_ncc(s, ident) > 0.95


def test_generate_and_load(tiny_manifest, tiny_dataset):
    with open(tiny_manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == MANIFEST_FIELDS
        rows = list(reader)
    assert len(rows) == 18 == len(tiny_dataset)
    assert {r["hand"] for r in rows} == {"L", "R"}
    assert isinstance(tiny_dataset, Dataset)
    assert tiny_dataset.images[0].dtype == np.float32
    assert np.abs(tiny_dataset.landmarks).max() <= 1.0
    assert all(m is not None for m in tiny_dataset.masks)
    sub = tiny_dataset.subset([0, 5])
    assert len(sub) == 2 and sub.paths[1] == tiny_dataset.paths[5]


def test_left_hands_are_stored_mirrored_and_flipped_back(tiny_manifest):
    raw = load_dataset(tiny_manifest, flip_left=False)
    flipped = load_dataset(tiny_manifest)
    i = raw.hands.index("L")
    np.testing.assert_array_equal(flipped.images[i], raw.images[i][:, ::-1])


def test_generation_is_deterministic(tmp_path, tiny_manifest):
    m = generate_dataset(6, tmp_path / "again", seed=3, samples_per_palm=3)
    assert manifest_hash(m) == manifest_hash(tiny_manifest)


def test_sample_counts_follow_distribution_and_rescale():
    r = np.random.default_rng(0)
    counts = draw_sample_counts(20000, r)
    assert counts.min() >= 1 and counts.max() <= 8
    assert counts.mean() == pytest.approx(2.89, abs=0.05)
    scaled = _rescale_counts(counts, 4.0, r)
    assert scaled.mean() == pytest.approx(4.0, abs=0.15)
    assert scaled.min() >= 1 and scaled.max() <= 8


def test_zero_palms_is_an_error(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset(0, tmp_path / "x")


def test_load_dataset_errors(tmp_path, tiny_manifest):
    bad = tmp_path / "manifest.csv"
    bad.write_text("path,palm_id\nimages/a.png,0\n")
    with pytest.raises(ValueError, match="lacks columns"):
        load_dataset(bad)
    text = tiny_manifest.read_text().splitlines()
    bad.write_text("\n".join([text[0], "images/none.png,0,0,R,10,10,1"]) + "\n")
    with pytest.raises(FileNotFoundError, match=":2"):
        load_dataset(bad)


def test_image_io_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 9, 3)).astype(np.uint8)
    save_image(tmp_path / "x.png", img)
    np.testing.assert_allclose(load_image(tmp_path / "x.png") * 255, img, atol=1e-4)
    save_image(tmp_path / "g.png", img[..., 0])
    assert load_image(tmp_path / "g.png").shape == (7, 9, 3)
