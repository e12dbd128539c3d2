import struct
import zlib

import numpy as np
import pytest

from irunet import rng
from irunet.imageio import (ImageFormatError, PNG_SIGNATURE, load_image, quantize,
                            save_image, tensor_to_image, to_batch, to_tensor)

from conftest import synth_image


def random_rgb(seed, h, w):
    vals = rng.raw_uint64(seed, 0, h * w * 3)
    return (vals % np.uint64(256)).astype(np.uint8).reshape(h, w, 3)


def png_chunk(ctype: bytes, data: bytes) -> bytes:
    return (struct.pack(">I", len(data)) + ctype + data
            + struct.pack(">I", zlib.crc32(ctype + data) & 0xFFFFFFFF))


def make_png(width, height, color_type, raw_rows: bytes) -> bytes:
    ihdr = struct.pack(">IIBBBBB", width, height, 8, color_type, 0, 0, 0)
    return (PNG_SIGNATURE + png_chunk(b"IHDR", ihdr)
            + png_chunk(b"IDAT", zlib.compress(raw_rows)) + png_chunk(b"IEND", b""))


class TestRoundTrips:
    def test_png_round_trip_bit_exact(self, tmp_path):
        img = random_rgb(1, 16, 16)
        path = tmp_path / "x.png"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_ppm_round_trip_bit_exact(self, tmp_path):
        img = random_rgb(2, 9, 13)
        path = tmp_path / "x.ppm"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_non_square_png(self, tmp_path):
        img = random_rgb(3, 5, 11)
        path = tmp_path / "r.png"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_save_rejects_bad_input(self, tmp_path):
        with pytest.raises(ImageFormatError):
            save_image(np.zeros((4, 4, 3), dtype=np.float32), tmp_path / "z.png")
        with pytest.raises(ImageFormatError):
            save_image(np.zeros((4, 4), dtype=np.uint8), tmp_path / "z.png")
        with pytest.raises(ImageFormatError, match="extension"):
            save_image(np.zeros((4, 4, 3), dtype=np.uint8), tmp_path / "z.bmp")


class TestPngDecoding:
    def test_all_filter_types_decode(self, tmp_path):
        # encode each scanline with every filter type, reference math inline
        img = random_rgb(4, 6, 7)
        h, w = 6, 7
        stride = w * 3
        flat = img.reshape(h, stride).astype(np.int32)
        rows = bytearray()
        prev = np.zeros(stride, dtype=np.int32)
        for y in range(h):
            ftype = y % 5
            cur = flat[y]
            left = np.concatenate([np.zeros(3, np.int32), cur[:-3]])
            upleft = np.concatenate([np.zeros(3, np.int32), prev[:-3]])
            if ftype == 0:
                enc = cur
            elif ftype == 1:
                enc = cur - left
            elif ftype == 2:
                enc = cur - prev
            elif ftype == 3:
                enc = cur - (left + prev) // 2
            else:
                p = left + prev - upleft
                pa, pb, pc = np.abs(p - left), np.abs(p - prev), np.abs(p - upleft)
                pred = np.where((pa <= pb) & (pa <= pc), left,
                                np.where(pb <= pc, prev, upleft))
                enc = cur - pred
            rows.append(ftype)
            rows.extend((enc % 256).astype(np.uint8).tobytes())
            prev = cur
        path = tmp_path / "filters.png"
        path.write_bytes(make_png(w, h, 2, bytes(rows)))
        assert np.array_equal(load_image(path), img)

    def test_grayscale_rejected(self, tmp_path):
        rows = b"".join(b"\x00" + bytes(range(8)) for _ in range(8))
        path = tmp_path / "gray.png"
        path.write_bytes(make_png(8, 8, 0, rows))
        with pytest.raises(ImageFormatError, match="grayscale"):
            load_image(path)

    def test_rgba_rejected(self, tmp_path):
        rows = b"".join(b"\x00" + bytes(32) for _ in range(8))
        path = tmp_path / "rgba.png"
        path.write_bytes(make_png(8, 8, 6, rows))
        with pytest.raises(ImageFormatError, match="RGBA"):
            load_image(path)

    def test_truncated_rejected(self, tmp_path):
        img = random_rgb(5, 8, 8)
        path = tmp_path / "full.png"
        save_image(img, path)
        cut = tmp_path / "cut.png"
        cut.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(ImageFormatError):
            load_image(cut)

    def test_chunk_crc_verified(self, tmp_path):
        img = random_rgb(6, 8, 8)
        path = tmp_path / "ok.png"
        save_image(img, path)
        buf = bytearray(path.read_bytes())
        buf[len(PNG_SIGNATURE) + 8 + 2] ^= 0x01  # flip a bit inside IHDR data
        bad = tmp_path / "badcrc.png"
        bad.write_bytes(bytes(buf))
        with pytest.raises(ImageFormatError, match="CRC"):
            load_image(bad)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "mystery.dat"
        path.write_bytes(b"GIF89a not supported here")
        with pytest.raises(ImageFormatError, match="unsupported"):
            load_image(path)


class TestPpmDecoding:
    def test_comment_in_header(self, tmp_path):
        img = random_rgb(7, 4, 4)
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n4 4\n255\n" + img.tobytes())
        assert np.array_equal(load_image(path), img)

    def test_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "m.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(ImageFormatError, match="maxval"):
            load_image(path)

    def test_truncated_pixels_rejected(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(ImageFormatError, match="truncated"):
            load_image(path)

    def test_p5_rejected(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(16))
        with pytest.raises(ImageFormatError, match="unsupported"):
            load_image(path)


class TestIngestion:
    def test_96x96_loads_to_chw(self, tmp_path):
        img = synth_image(11, size=96)
        path = tmp_path / "a.png"
        save_image(img, path)
        t = to_tensor(load_image(path))
        assert t.shape == (3, 96, 96)
        assert t.data.min() >= 0.0 and t.data.max() <= 1.0

    def test_to_batch_stacks(self):
        imgs = [random_rgb(i, 8, 8) for i in range(3)]
        t = to_batch(imgs)
        assert t.shape == (3, 3, 8, 8)
        assert np.allclose(t.data[1], np.transpose(imgs[1], (2, 0, 1)) / 255.0, atol=1e-7)

    def test_to_batch_rejects_mixed_dims(self):
        with pytest.raises(ValueError, match="mixed"):
            to_batch([random_rgb(0, 8, 8), random_rgb(1, 8, 9)])

    def test_quantize_round_half_away(self):
        vals = np.array([0.0, 0.5 / 255.0, 1.5 / 255.0, 1.0, 2.0, -1.0])
        assert np.array_equal(quantize(vals), [0, 1, 2, 255, 255, 0])

    def test_quantize_inverts_ingestion(self):
        img = random_rgb(8, 8, 8)
        t = to_tensor(img)
        assert np.array_equal(tensor_to_image(t), img)

    def test_tensor_round_trip_through_files(self, tmp_path):
        img = random_rgb(9, 16, 16)
        t = to_batch([img])
        out = tensor_to_image(t)
        path = tmp_path / "rt.png"
        save_image(out, path)
        assert np.array_equal(load_image(path), img)
