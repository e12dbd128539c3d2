"""8-bit RGB image files: PNG and binary PPM (P6), plus tensor ingestion.

Only the formats the pipeline needs are supported, and strictly: PNG must
be 8-bit truecolor without alpha or interlace, PPM must be P6 with maxval
255. Everything else is rejected with a diagnostic rather than silently
converted.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .tensor import Tensor

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    """Unsupported, malformed or truncated image file."""


# ----------------------------------------------------------------- PNG

def _png_chunks(buf: bytes, path):
    pos = len(PNG_SIGNATURE)
    while True:
        if pos + 8 > len(buf):
            raise ImageFormatError(f"{path}: truncated PNG (no IEND)")
        (length,) = struct.unpack(">I", buf[pos:pos + 4])
        ctype = buf[pos + 4:pos + 8]
        data_end = pos + 8 + length
        if data_end + 4 > len(buf):
            raise ImageFormatError(f"{path}: truncated PNG chunk {ctype!r}")
        data = buf[pos + 8:data_end]
        (crc,) = struct.unpack(">I", buf[data_end:data_end + 4])
        if zlib.crc32(ctype + data) & 0xFFFFFFFF != crc:
            raise ImageFormatError(f"{path}: CRC mismatch in chunk {ctype!r}")
        yield ctype, data
        pos = data_end + 4
        if ctype == b"IEND":
            return


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _defilter(raw: bytes, width: int, height: int, path) -> np.ndarray:
    bpp = 3
    stride = width * bpp
    if len(raw) != height * (stride + 1):
        raise ImageFormatError(f"{path}: PNG pixel data has wrong length")
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = bytearray(stride)
    for y in range(height):
        ftype = raw[y * (stride + 1)]
        line = bytearray(raw[y * (stride + 1) + 1:(y + 1) * (stride + 1)])
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for x in range(bpp, stride):
                line[x] = (line[x] + line[x - bpp]) & 0xFF
        elif ftype == 2:  # Up
            for x in range(stride):
                line[x] = (line[x] + prev[x]) & 0xFF
        elif ftype == 3:  # Average
            for x in range(stride):
                left = line[x - bpp] if x >= bpp else 0
                line[x] = (line[x] + ((left + prev[x]) >> 1)) & 0xFF
        elif ftype == 4:  # Paeth
            for x in range(stride):
                left = line[x - bpp] if x >= bpp else 0
                upleft = prev[x - bpp] if x >= bpp else 0
                line[x] = (line[x] + _paeth(left, prev[x], upleft)) & 0xFF
        else:
            raise ImageFormatError(f"{path}: unknown PNG filter type {ftype}")
        out[y] = np.frombuffer(bytes(line), dtype=np.uint8)
        prev = line
    return out.reshape(height, width, bpp)


_COLOR_TYPE_NAMES = {0: "grayscale", 3: "palette", 4: "grayscale+alpha", 6: "RGBA"}


def _load_png(buf: bytes, path) -> np.ndarray:
    width = height = None
    idat = bytearray()
    seen_iend = False
    for ctype, data in _png_chunks(buf, path):
        if ctype == b"IHDR":
            width, height, depth, color, comp, filt, interlace = struct.unpack(">IIBBBBB", data)
            if depth != 8:
                raise ImageFormatError(f"{path}: only 8-bit PNG supported, got depth {depth}")
            if color != 2:
                kind = _COLOR_TYPE_NAMES.get(color, f"color type {color}")
                raise ImageFormatError(f"{path}: only RGB PNG supported, got {kind}")
            if comp != 0 or filt != 0:
                raise ImageFormatError(f"{path}: unsupported PNG compression/filter method")
            if interlace != 0:
                raise ImageFormatError(f"{path}: interlaced PNG not supported")
        elif ctype == b"IDAT":
            idat.extend(data)
        elif ctype == b"IEND":
            seen_iend = True
    if width is None:
        raise ImageFormatError(f"{path}: missing IHDR")
    if not seen_iend or not idat:
        raise ImageFormatError(f"{path}: missing image data")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise ImageFormatError(f"{path}: corrupt PNG stream ({e})") from e
    return _defilter(raw, width, height, path)


def _save_png(img: np.ndarray, path) -> None:
    height, width, _ = img.shape
    stride = width * 3
    body = bytearray()
    flat = img.reshape(height, stride)
    for y in range(height):
        body.append(0)  # filter None
        body.extend(flat[y].tobytes())
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)

    def chunk(ctype: bytes, data: bytes) -> bytes:
        return (struct.pack(">I", len(data)) + ctype + data
                + struct.pack(">I", zlib.crc32(ctype + data) & 0xFFFFFFFF))

    with open(path, "wb") as f:
        f.write(PNG_SIGNATURE)
        f.write(chunk(b"IHDR", ihdr))
        f.write(chunk(b"IDAT", zlib.compress(bytes(body), 6)))
        f.write(chunk(b"IEND", b""))


# ----------------------------------------------------------------- PPM

def _ppm_tokens(buf: bytes, count: int, path) -> tuple[list[int], int]:
    """First `count` whitespace-separated integer tokens after the magic."""
    tokens: list[int] = []
    pos = 2  # past "P6"
    while len(tokens) < count:
        if pos >= len(buf):
            raise ImageFormatError(f"{path}: truncated PPM header")
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(buf) and buf[pos:pos + 1].isdigit():
                pos += 1
            tokens.append(int(buf[start:pos]))
        else:
            raise ImageFormatError(f"{path}: malformed PPM header")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ImageFormatError(f"{path}: malformed PPM header")
    return tokens, pos + 1  # single whitespace after maxval


def _load_ppm(buf: bytes, path) -> np.ndarray:
    (width, height, maxval), start = _ppm_tokens(buf, 3, path)
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 PPM supported, got {maxval}")
    need = width * height * 3
    data = buf[start:start + need]
    if len(data) != need:
        raise ImageFormatError(f"{path}: truncated PPM pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def _save_ppm(img: np.ndarray, path) -> None:
    height, width, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (width, height))
        f.write(img.tobytes())


# ------------------------------------------------------------- public API

def load_image(path) -> np.ndarray:
    """Load an 8-bit RGB image as uint8 [H,W,3]; format sniffed from content."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf.startswith(PNG_SIGNATURE):
        return _load_png(buf, path)
    if buf.startswith(b"P6"):
        return _load_ppm(buf, path)
    raise ImageFormatError(f"{path}: unsupported image format (PNG or PPM P6 required)")


def save_image(img: np.ndarray, path) -> None:
    """Write uint8 [H,W,3] losslessly; format chosen by extension (.png/.ppm)."""
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise ImageFormatError("save_image expects a uint8 array")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError(f"save_image expects [H,W,3] RGB, got shape {img.shape}")
    name = str(path).lower()
    img = np.ascontiguousarray(img)
    if name.endswith(".png"):
        _save_png(img, path)
    elif name.endswith(".ppm"):
        _save_ppm(img, path)
    else:
        raise ImageFormatError(f"{path}: unsupported output extension (.png or .ppm)")


def to_tensor(img: np.ndarray, dtype=np.float32) -> Tensor:
    """Ingest uint8 [H,W,3] as a [3,H,W] tensor normalized to [0,1]."""
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("to_tensor expects a uint8 [H,W,3] image")
    chw = np.transpose(img, (2, 0, 1)).astype(dtype) / dtype(255)
    return Tensor(chw)


def to_batch(imgs: list[np.ndarray], dtype=np.float32) -> Tensor:
    """Stack equal-sized uint8 [H,W,3] images into a [N,3,H,W] tensor in [0,1]."""
    if not imgs:
        raise ValueError("to_batch needs at least one image")
    shape = imgs[0].shape
    for im in imgs:
        if im.shape != shape:
            raise ValueError(f"mixed image dimensions in batch: {shape} vs {im.shape}")
    planes = [np.transpose(im, (2, 0, 1)) for im in imgs]
    data = np.stack(planes).astype(dtype) / dtype(255)
    return Tensor(data)


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0,1] float values to uint8, same rounding as the corruption path."""
    scaled = np.clip(np.asarray(values, dtype=np.float64) * 255.0, 0.0, 255.0)
    return np.floor(scaled + 0.5).astype(np.uint8)


def tensor_to_image(t: Tensor | np.ndarray) -> np.ndarray:
    """Quantize a [3,H,W] or [1,3,H,W] reconstruction back to uint8 [H,W,3]."""
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if data.ndim == 4:
        if data.shape[0] != 1:
            raise ValueError(f"expected a single image, got batch of {data.shape[0]}")
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 3:
        raise ValueError(f"expected [3,H,W], got shape {data.shape}")
    return quantize(np.transpose(data, (1, 2, 0)))
