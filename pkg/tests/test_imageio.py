import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stegopurge.imageio import (PGMHeaderError, PGMMaxvalError, PGMTruncatedError, as_gray,
                                denormalize_01, denormalize_tanh, normalize, read_image,
                                read_pgm, round_half_away, to_pixels, write_image, write_pgm)

images = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)))


def test_read_known_bytes(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 7]))
    assert read_pgm(p).tolist() == [[0, 128], [255, 7]]


def test_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5 # made by hand\n# another\n3 1\n255\n" + bytes([1, 2, 3]))
    assert read_pgm(p).tolist() == [[1, 2, 3]]


def test_minimal_file_layout(tmp_path):
    p = tmp_path / "one.pgm"
    write_pgm(np.array([[42]], dtype=np.uint8), p)
    data = p.read_bytes()
    assert data == b"P5\n1 1\n255\n" + bytes([42])
    assert len(data) == 12


def test_unsupported_maxval(tmp_path):
    p = tmp_path / "wide.pgm"
    p.write_bytes(b"P5\n1 1\n65535\n" + bytes(2))
    with pytest.raises(PGMMaxvalError, match="unsupported maxval"):
        read_pgm(p)


@pytest.mark.parametrize("blob", [b"P2\n1 1\n255\n1", b"P5\n1\n", b"P5 x 1 255\n", b"P5\n1 1\n255"])
def test_malformed_header(tmp_path, blob):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(PGMHeaderError):
        read_pgm(p)


def test_truncated(tmp_path):
    p = tmp_path / "short.pgm"
    p.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
    with pytest.raises(PGMTruncatedError):
        read_pgm(p)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_pgm(np.zeros((2, 2), np.uint8), tmp_path / "missing" / "x.pgm")


@given(images)
def test_pgm_round_trip(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("rt") / "x.pgm"
    write_pgm(img, p)
    assert np.array_equal(read_pgm(p), img)


@given(images)
def test_png_round_trip(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("rt") / "x.png"
    write_image(img, p)
    assert np.array_equal(read_image(p), img)


def test_as_gray_validates():
    with pytest.raises(ValueError):
        as_gray(np.zeros(5))
    with pytest.raises(ValueError):
        as_gray(np.array([[256]]))
    with pytest.raises(ValueError):
        as_gray(np.array([[1.5]]))
    g = as_gray([[1, 2]])
    assert g.dtype == np.uint8 and not g.flags.writeable


def test_normalize_endpoints():
    x = normalize(np.array([[0, 51, 255]], dtype=np.uint8))
    assert x.tolist() == [[0.0, 0.2, 1.0]]


@given(images)
def test_normalize_round_trip(img):
    assert np.array_equal(denormalize_01(normalize(img)), img)
    assert normalize(img).min() >= 0 and normalize(img).max() <= 1


def test_denormalize_tanh_values():
    out = denormalize_tanh(np.array([-1.0, 1.0, 0.0, 1.3, -7.0]), width=5, height=1)
    assert out.tolist() == [[0, 255, 128, 255, 0]]


def test_rounding_is_half_away_from_zero():
    assert round_half_away([0.5, 1.5, 2.5, -0.5, -2.5]).tolist() == [1, 2, 3, -1, -3]
    assert to_pixels([[127.5, 254.5]]).tolist() == [[128, 255]]


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-3, 3)))
def test_denormalize_tanh_bounds(v):
    out = denormalize_tanh(v, width=v.size, height=1)
    assert out.shape == (1, v.size)
    assert out.dtype == np.uint8
