import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jemstereo.image_io import (CalibInfo, ImageIOError, downsample_image, effective_levels,
                                parse_calib, read_image, read_mask, read_pfm, to_gray,
                                write_image, write_mask, write_pfm)


def _ppm(path, h, w, pixels):
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + bytes(pixels))


def test_read_single_pixel_ppm(tmp_path):
    _ppm(tmp_path / "a.ppm", 1, 1, [255, 0, 0])
    img = read_image(tmp_path / "a.ppm")
    assert img.shape == (1, 1, 3) and img.dtype == np.uint8
    assert img[0, 0].tolist() == [255, 0, 0]


def test_ppm_bytes_reproduced(tmp_path, rng):
    data = rng.integers(0, 256, size=5 * 7 * 3, dtype=np.uint8)
    _ppm(tmp_path / "b.ppm", 5, 7, data.tolist())
    img = read_image(tmp_path / "b.ppm")
    assert img.tobytes() == data.tobytes()


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, size=(6, 9, 3), dtype=np.uint8)
    write_image(tmp_path / "c.png", img)
    np.testing.assert_array_equal(read_image(tmp_path / "c.png"), img)


def test_truncated_png_names_file(tmp_path, rng):
    write_image(tmp_path / "t.png", rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8))
    raw = (tmp_path / "t.png").read_bytes()
    (tmp_path / "t.png").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(ImageIOError, match="t.png"):
        read_image(tmp_path / "t.png")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ImageIOError, match="nope.png"):
        read_image(tmp_path / "nope.png")


def test_sixteen_bit_rejected(tmp_path):
    from PIL import Image
    Image.fromarray(np.full((3, 3), 4000, dtype=np.uint16)).save(tmp_path / "d.png")
    with pytest.raises(ImageIOError, match="bit depth"):
        read_image(tmp_path / "d.png")


def test_to_gray_values():
    img = np.array([[[100, 100, 100], [255, 0, 0]],
                    [[0, 255, 0], [0, 0, 255]]], dtype=np.uint8)
    g = to_gray(img)
    assert g.shape == (2, 2) and g.dtype == np.float32
    assert g[0, 0] == pytest.approx(100.0, abs=1e-4)
    assert g[0, 1] == pytest.approx(76.245, abs=1e-4)
    assert g[1, 0] == pytest.approx(0.587 * 255, abs=1e-4)
    assert g[1, 1] == pytest.approx(0.114 * 255, abs=1e-4)


def test_pfm_round_trip_with_invalid(tmp_path):
    disp = np.array([[0, 1, 2], [3, 4, np.inf]], dtype=np.float32)
    write_pfm(tmp_path / "m.pfm", disp)
    out = read_pfm(tmp_path / "m.pfm")
    assert out.shape == (2, 3)
    assert out.tobytes() == disp.tobytes()


def test_pfm_format_forced_parse(tmp_path):
    # bottom row stored first
    payload = np.array([3, 4, 1, 2], dtype="<f4").tobytes()
    (tmp_path / "f.pfm").write_bytes(b"Pf 2 2 -1.0\n" + payload)
    np.testing.assert_array_equal(read_pfm(tmp_path / "f.pfm"), [[1, 2], [3, 4]])


def test_pfm_big_endian(tmp_path):
    disp = np.arange(6, dtype=np.float32).reshape(2, 3)
    write_pfm(tmp_path / "be.pfm", disp, scale=1.0)
    raw = (tmp_path / "be.pfm").read_bytes()
    assert raw.startswith(b"Pf\n3 2\n1.0\n")
    np.testing.assert_array_equal(read_pfm(tmp_path / "be.pfm"), disp)


def test_color_pfm_rejected(tmp_path):
    (tmp_path / "c.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
    with pytest.raises(ImageIOError, match="expected grayscale PFM"):
        read_pfm(tmp_path / "c.pfm")


@pytest.mark.parametrize("raw", [b"P5\n1 1\n-1.0\n" + bytes(4),
                                 b"Pf\n2 2\n-1.0\n" + bytes(12),
                                 b"Pf\n1 1\n-1.0\n" + np.array([np.nan], "<f4").tobytes()])
def test_bad_pfm_rejected(tmp_path, raw):
    (tmp_path / "x.pfm").write_bytes(raw)
    with pytest.raises(ImageIOError):
        read_pfm(tmp_path / "x.pfm")


def test_write_pfm_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        write_pfm(tmp_path / "n.pfm", np.array([[np.nan]], dtype=np.float32))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 9), st.integers(1, 9)),
              elements=st.floats(0, 1e6, width=32) | st.just(np.inf)),
       st.sampled_from([-1.0, 1.0, -0.5]))
def test_pfm_round_trip_property(tmp_path_factory, disp, scale):
    path = tmp_path_factory.mktemp("pfm") / "p.pfm"
    write_pfm(path, disp, scale)
    assert read_pfm(path).tobytes() == disp.tobytes()


def test_parse_calib(tmp_path):
    (tmp_path / "calib.txt").write_text(
        "cam0=[1 0 0; 0 1 0; 0 0 1]\nwidth=741  \nndisp=290\nheight=497\nvmin=1\n")
    info = parse_calib(tmp_path / "calib.txt")
    assert info == CalibInfo(290, 741, 497)


def test_parse_calib_order_and_whitespace(tmp_path):
    (tmp_path / "a.txt").write_text("ndisp=70\nwidth=10\nheight=8\n")
    (tmp_path / "b.txt").write_text("height=8   \n\nwidth=10\t\nndisp=70  \n")
    assert parse_calib(tmp_path / "a.txt") == parse_calib(tmp_path / "b.txt")


def test_parse_calib_missing_ndisp(tmp_path):
    (tmp_path / "calib.txt").write_text("width=10\n")
    with pytest.raises(ImageIOError, match="ndisp"):
        parse_calib(tmp_path / "calib.txt")


def test_effective_levels_quarter_size():
    assert effective_levels(70, 4) == 18
    assert CalibInfo(70).levels(4) == 18
    assert effective_levels(290, 1) == 290
    assert effective_levels(5, 4) == 2


def test_mask_reads_only_255_as_valid(tmp_path):
    write_image(tmp_path / "m.png", np.array([[255, 128, 0]], dtype=np.uint8))
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), [[True, False, False]])
    write_mask(tmp_path / "n.png", np.array([[True, False]]))
    np.testing.assert_array_equal(read_mask(tmp_path / "n.png"), [[True, False]])


def test_downsample_box_average():
    img = np.arange(16, dtype=np.float32).reshape(4, 4)
    out = downsample_image(img, 2)
    np.testing.assert_allclose(out, [[2.5, 4.5], [10.5, 12.5]])
    odd = downsample_image(np.ones((5, 7, 3), dtype=np.uint8) * 9, 4)
    assert odd.shape == (2, 2, 3) and odd.dtype == np.uint8 and (odd == 9).all()
