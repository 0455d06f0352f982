import lzma
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_cloud
from exgs.codec import (BYTES_PER_GAUSSIAN, FLAG_LZMA, FLAG_RAW, HEADER_SIZE, compress, decompress, half_round_trip,
                        ratio_report, read_header)
from exgs.errors import CapacityError, CorruptionError, FormatError, InvalidParameterError, UnsupportedVersionError
from exgs.model import GaussianCloud
from exgs.synth import SynthSpec, make_scene


def decoded_payload(data):
    _, flags, _, _ = read_header(data)
    body = data[HEADER_SIZE:]
    return lzma.decompress(body) if flags == FLAG_LZMA else body


def bits_equal(a: GaussianCloud, b: GaussianCloud):
    return a == b


def test_empty_is_bare_header():
    data = compress(GaussianCloud.empty(sh_degree=3))
    assert data == b"EXGS" + struct.pack("<HHIB", 1, 0, 0, 0) + bytes(7)
    assert len(data) == 20
    assert decompress(data).count == 0


def test_header_fields(rng):
    c = random_cloud(rng, 7, sh_degree=3)
    data = compress(c)
    magic, version, flags, count, deg = struct.unpack_from("<4sHHIB", data)
    assert (magic, version, count, deg) == (b"EXGS", 1, 7, 0)
    assert flags in (FLAG_LZMA, FLAG_RAW)
    assert data[13:20] == bytes(7)


def test_payload_size_1000(rng):
    data = compress(random_cloud(rng, 1000, sh_degree=3))
    assert len(decoded_payload(data)) == 28_000 == 14 * 2 * 1000


def test_payload_layout(rng):
    c = random_cloud(rng, 5)
    raw = np.frombuffer(decoded_payload(compress(c)), "<f2")
    n = 5
    np.testing.assert_array_equal(raw[:3 * n], c.means.astype(np.float16).ravel())
    np.testing.assert_array_equal(raw[3 * n:6 * n], c.sh_dc.astype(np.float16).ravel())
    np.testing.assert_array_equal(raw[6 * n:7 * n], c.opacity_logit.astype(np.float16))
    np.testing.assert_array_equal(raw[7 * n:10 * n], c.scale_log.astype(np.float16).ravel())
    np.testing.assert_array_equal(raw[10 * n:], c.rotation.astype(np.float16).ravel())


@pytest.mark.parametrize("n", [0, 1, 7, 1000])
def test_round_trip_is_half_quantisation(rng, n):
    c = random_cloud(rng, n, sh_degree=3)
    assert decompress(compress(c)) == half_round_trip(c)


def test_extreme_values_round_trip():
    c = GaussianCloud(
        means=[[65504.0, -65504.0, 6e-8], [1e-3, 0, -0.0]],
        scale_log=[[-20.0, -17.3, -16.0], [np.log(1e-7)] * 3],
        rotation=[[1, 0, 0, 0], [1e-4, 0, 0, 1]],
        opacity_logit=[60000.0, -60000.0],
        sh_dc=[[1e4, -1e4, 0.0], [3.0, -3.0, 1e-6]],
    )
    assert decompress(compress(c)) == half_round_trip(c)


def test_out_of_half_range_rejected():
    c = GaussianCloud([[1e6, 0, 0]], [[0, 0, 0]], [[1, 0, 0, 0]], [0], [[0, 0, 0]])
    with pytest.raises(CapacityError):
        compress(c)


def test_half_rounding_is_nearest_even():
    # 2049 sits halfway between representable 2048 and 2050 -> even mantissa 2048
    c = GaussianCloud([[2049.0, 2051.0, 1.0 + 2 ** -11]], [[0, 0, 0]], [[1, 0, 0, 0]], [0], [[0, 0, 0]])
    np.testing.assert_array_equal(decompress(compress(c)).means[0], [2048.0, 2052.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2 ** 32 - 1))
def test_quantisation_error_bound(n, seed):
    c = random_cloud(np.random.default_rng(seed), n)
    back = decompress(compress(c))
    for name in ("means", "sh_dc", "scale_log", "rotation", "opacity_logit"):
        x = getattr(c, name).astype(np.float64)
        y = getattr(back, name).astype(np.float64)
        normal = np.abs(x) >= 2 ** -14
        assert np.all(np.abs(y - x)[normal] <= 2 ** -11 * np.abs(x)[normal])
        assert np.all(np.abs(y - x)[~normal] <= 2 ** -25)


def test_incompressible_payload_stored_raw():
    rng = np.random.default_rng(1)
    n = 64
    words = rng.integers(0, 0x7BFF, (n, 14)).astype(np.uint16).view(np.float16).astype(np.float32)
    c = GaussianCloud(words[:, :3], words[:, 7:10], words[:, 10:], words[:, 6], words[:, 3:6])
    data = compress(c)
    _, flags, _, _ = read_header(data)
    assert flags == FLAG_RAW and len(data) == 20 + n * BYTES_PER_GAUSSIAN
    assert decompress(data) == half_round_trip(c)


def test_structured_scene_is_compressed():
    data = compress(make_scene(SynthSpec("textured-room", 2000, seed=1, extent=4.0)).truncate_sh())
    assert read_header(data)[1] == FLAG_LZMA
    assert len(data) < 20 + 2000 * BYTES_PER_GAUSSIAN


def test_size_bounds(rng):
    for n in (1, 10, 500):
        data = compress(random_cloud(rng, n))
        assert 20 <= len(data) <= 20 + n * BYTES_PER_GAUSSIAN


class TestCorruption:
    @pytest.fixture
    def good(self):
        return compress(make_scene(SynthSpec("textured-room", 300, seed=5, extent=4.0)))

    def test_bad_magic(self, good):
        with pytest.raises(FormatError):
            decompress(b"EXGT" + good[4:])

    def test_future_version(self, good):
        with pytest.raises(UnsupportedVersionError):
            decompress(good[:4] + struct.pack("<H", 2) + good[6:])

    def test_every_truncation(self, good):
        for cut in range(len(good)):
            with pytest.raises(FormatError):
                decompress(good[:cut])

    def test_flipped_stream_bytes(self, good):
        rng = np.random.default_rng(0)
        for pos in rng.integers(HEADER_SIZE, len(good), 60):
            bad = bytearray(good)
            bad[pos] ^= 0xFF
            with pytest.raises(CorruptionError):
                decompress(bytes(bad))

    def test_bad_flags_and_trailing(self, good):
        with pytest.raises(CorruptionError):
            decompress(good[:6] + struct.pack("<H", 3) + good[8:])
        with pytest.raises(CorruptionError):
            decompress(good[:6] + struct.pack("<H", 0) + good[8:])
        with pytest.raises(CorruptionError):
            decompress(good + b"\x00")
        with pytest.raises(CorruptionError):
            decompress(good[:8] + struct.pack("<I", 301) + good[12:])


def test_ratio_report():
    r = ratio_report(354_770_000, 3_310_000)
    assert round(r.ratio, 1) == 107.2
    assert r.original_mb == pytest.approx(354.77) and r.compressed_mb == pytest.approx(3.31)
    assert ratio_report(123, 123).ratio == 1.0
    assert round(ratio_report(248_000, 28_020).ratio, 2) == 8.85
    with pytest.raises(InvalidParameterError):
        ratio_report(100, 0)


def test_pre_entropy_ratio_identity():
    assert 248 / (28 * 0.1) == pytest.approx(88.5714, abs=1e-4)
