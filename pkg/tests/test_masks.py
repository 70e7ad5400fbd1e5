import numpy as np
import pytest

from aasgen.errors import MaskFormatError
from aasgen.masks import ClassMask, encode_pgm, parse_pgm, read_pgm, write_pgm


def test_round_trip(tmp_path):
    a = np.arange(12, dtype=np.uint8).reshape(3, 4)
    mask = ClassMask.from_array(a)
    write_pgm(tmp_path / "m.pgm", mask)
    back = read_pgm(tmp_path / "m.pgm")
    assert back == mask
    assert (back.width, back.height) == (4, 3)
    np.testing.assert_array_equal(back.as_array(), a)


def test_header_with_comments_and_odd_whitespace():
    raw = b"P5 # class mask\n# made by hand\n 3\t2 \n255\n" + bytes([0, 1, 2, 2, 1, 0])
    mask = parse_pgm(raw)
    np.testing.assert_array_equal(mask.as_array(), [[0, 1, 2], [2, 1, 0]])


def test_raster_may_start_with_whitespace_byte():
    # byte 10 is '\n'; only one whitespace byte separates header and raster
    raw = b"P5\n2 1\n255\n" + bytes([10, 32])
    np.testing.assert_array_equal(parse_pgm(raw).data, [10, 32])


@pytest.mark.parametrize("raw", [
    b"P2\n1 1\n255\n0",
    b"P5\n2 2\n255\n\x00\x00",
    b"P5\n1 1\n65535\n\x00\x00",
    b"P5\n1 1\n",
    b"P5\nx 1\n255\n\x00",
])
def test_malformed(raw):
    with pytest.raises(MaskFormatError):
        parse_pgm(raw)


def test_dimension_mismatch():
    with pytest.raises(MaskFormatError):
        ClassMask(3, 3, np.zeros(8, dtype=np.uint8))


def test_class_counts():
    mask = ClassMask.from_array([[1, 1, 2], [0, 1, 2]])
    assert mask.class_counts() == {0: 1, 1: 3, 2: 2}
    assert encode_pgm(mask).startswith(b"P5\n3 2\n255\n")
