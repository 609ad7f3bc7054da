"""Binary PGM/PPM images, the float32 depth file format and ``key = value`` configs.

Depth files are laid out as::

    b"VSDEPTH1"                 magic
    uint32 LE width, height
    uint16 LE n, n bytes UTF-8   units note
    width * height float32 LE    row-major values
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .geometry import Pose6, to_matrix

DEPTH_MAGIC = b"VSDEPTH1"
_WS = b" \t\r\n"


class ParseError(ValueError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, path, offset: int, reason: str):
        super().__init__(f"{path}: byte {offset}: {reason}")
        self.path = str(path)
        self.offset = offset
        self.reason = reason


# --- netpbm -----------------------------------------------------------------


def _header_tokens(data: bytes, path, count: int) -> tuple[list[tuple[bytes, int]], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and (data[i : i + 1] in (b" ", b"\t", b"\r", b"\n") or data[i : i + 1] == b"#"):
            if data[i : i + 1] == b"#":
                while i < n and data[i : i + 1] != b"\n":
                    i += 1
            else:
                i += 1
        if i >= n:
            raise ParseError(path, i, "unexpected end of header")
        start = i
        while i < n and data[i] not in _WS and data[i : i + 1] != b"#":
            i += 1
        tokens.append((data[start:i], start))
    if i >= n or data[i] not in _WS:
        raise ParseError(path, i, "expected a single whitespace byte after the header")
    return tokens, i + 1


def _header_int(tok: bytes, offset: int, path, what: str) -> int:
    if not tok.isdigit():
        raise ParseError(path, offset, f"{what} is not a decimal integer: {tok[:16]!r}")
    return int(tok)


def decode_netpbm(data: bytes, path="<bytes>") -> np.ndarray:
    """Decode a P5 or P6 image into floats in [0, 1], shape (H, W) or (H, W, 3)."""
    if data[:2] not in (b"P5", b"P6"):
        raise ParseError(path, 0, f"unsupported magic {data[:2]!r}, expected P5 or P6")
    channels = 1 if data[:2] == b"P5" else 3
    if len(data) < 3 or data[2] not in _WS:
        raise ParseError(path, 2, "expected whitespace after the magic number")
    try:
        tokens, start = _header_tokens(data[2:], path, 3)
    except ParseError as exc:
        raise ParseError(path, exc.offset + 2, exc.reason) from None
    (wt, wo), (ht, ho), (mt, mo) = [(t, o + 2) for t, o in tokens]
    start += 2
    width = _header_int(wt, wo, path, "width")
    height = _header_int(ht, ho, path, "height")
    maxval = _header_int(mt, mo, path, "maxval")
    if width == 0 or height == 0:
        raise ParseError(path, wo if width == 0 else ho, "image dimensions must be positive")
    if maxval not in (255, 65535):
        raise ParseError(path, mo, f"maxval {maxval} not supported (use 255 or 65535)")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    needed = width * height * channels * dtype.itemsize
    payload = data[start:]
    if len(payload) < needed:
        raise ParseError(path, len(data), f"truncated payload: {len(payload)} of {needed} bytes")
    raw = np.frombuffer(payload[:needed], dtype=dtype).astype(np.float64)
    img = raw / maxval
    return img.reshape(height, width) if channels == 1 else img.reshape(height, width, 3)


def encode_netpbm(img, maxval: int = 65535, comment: str | None = None) -> bytes:
    """Encode a [0, 1] image; values are clipped and rounded to the nearest level."""
    a = np.asarray(img, dtype=np.float64)
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode image of shape {a.shape} as PGM/PPM")
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    q = np.rint(np.clip(a, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval == 65535 else "u1"
    header = magic + b"\n"
    if comment:
        for line in comment.splitlines():
            header += b"# " + line.encode("utf-8") + b"\n"
    header += f"{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode("ascii")
    return header + q.astype(dtype).tobytes()


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read(), path)


def write_image(img, path, maxval: int = 65535, comment: str | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(img, maxval, comment))


# --- depth files -------------------------------------------------------------


def encode_depth(field, note: str = "") -> bytes:
    a = np.asarray(field, dtype=np.float32)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"depth field must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("depth field contains non-finite values")
    note_b = note.encode("utf-8")
    if len(note_b) > 0xFFFF:
        raise ValueError("note too long")
    header = DEPTH_MAGIC + struct.pack("<IIH", a.shape[1], a.shape[0], len(note_b)) + note_b
    return header + a.astype("<f4").tobytes()


def decode_depth(data: bytes, path="<bytes>") -> tuple[np.ndarray, str]:
    """Return the float32 field and its units note."""
    if data[: len(DEPTH_MAGIC)] != DEPTH_MAGIC:
        raise ParseError(path, 0, f"bad magic {data[:8]!r}")
    off = len(DEPTH_MAGIC)
    if len(data) < off + 10:
        raise ParseError(path, len(data), "truncated header")
    width, height, nlen = struct.unpack_from("<IIH", data, off)
    if width == 0 or height == 0:
        raise ParseError(path, off if width == 0 else off + 4, "dimensions must be positive")
    off += 10
    if len(data) < off + nlen:
        raise ParseError(path, len(data), "truncated units note")
    try:
        note = data[off : off + nlen].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(path, off + exc.start, "units note is not UTF-8") from exc
    off += nlen
    expected = width * height * 4
    if len(data) - off != expected:
        raise ParseError(path, off, f"payload is {len(data) - off} bytes, header implies {expected}")
    a = np.frombuffer(data, dtype="<f4", count=width * height, offset=off).reshape(height, width)
    if not np.all(np.isfinite(a)):
        bad = int(np.argmax(~np.isfinite(a.ravel())))
        raise ParseError(path, off + 4 * bad, "non-finite value")
    return a.astype(np.float32), note


def write_depth(field, path, note: str = "") -> None:
    with open(path, "wb") as fh:
        fh.write(encode_depth(field, note))


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_depth(fh.read(), path)[0]


# --- config files ------------------------------------------------------------


def parse_config_text(text: str, path="<text>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), 1):
        body = line.split("#", 1)[0].strip()
        if body:
            if "=" not in body:
                raise ParseError(path, offset, f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in body.split("=", 1))
            if not key:
                raise ParseError(path, offset, f"line {lineno}: empty key")
            if key in out:
                raise ParseError(path, offset, f"line {lineno}: duplicate key {key!r}")
            out[key] = value
        offset += len(line.encode("utf-8"))
    return out


def read_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), path)


def format_config(values: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def format_poses(poses, header: str = "") -> str:
    """One ``pose_k`` line (rx ry rz tx ty tz) and one ``pose_k_matrix`` line (row-major [R|T]) per pose."""
    lines = [f"# {header}"] if header else []
    lines.append("# pose_k = rx ry rz tx ty tz ; pose_k_matrix = row-major 3x4 [R|T] mapping target to source")
    for k, pose in enumerate(poses):
        lines.append(f"pose_{k} = " + " ".join(repr(float(x)) for x in pose.as_array()))
        lines.append(f"pose_{k}_matrix = " + " ".join(repr(float(x)) for x in to_matrix(pose).ravel()))
    return "\n".join(lines) + "\n"


def write_poses(poses, path, header: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_poses(poses, header))


def read_poses(path) -> list[tuple[Pose6, np.ndarray]]:
    """Return ``(pose, matrix)`` pairs in index order."""
    values = read_config(path)
    out = []
    k = 0
    while f"pose_{k}" in values:
        vec = np.array([float(x) for x in values[f"pose_{k}"].split()])
        mat = np.array([float(x) for x in values[f"pose_{k}_matrix"].split()]).reshape(3, 4)
        if vec.size != 6:
            raise ValueError(f"{path}: pose_{k} has {vec.size} values, expected 6")
        out.append((Pose6.from_array(vec), mat))
        k += 1
    return out


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
