"""File formats: PGM images, matrix CSV, flat key-value text."""

import csv
import io
import os
import re
import tempfile
from pathlib import Path

import numpy as np

_MATRIX_HEADER = re.compile(r"#\s*rows=(\d+)\s+cols=(\d+)\s+layout=(\S+)")


# ----------------------------------------------------------------------------
# PGM
# ----------------------------------------------------------------------------

def _pgm_tokens(data, count, pos):
    """Read `count` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ValueError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path):
    """Read a binary (P5) or ASCII (P2) PGM file as a float array."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
    width, height, maxval = int(w), int(h), int(maxval)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad PGM header")
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        count = width * height
        raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos) if \
            len(data) - pos >= count * np.dtype(dtype).itemsize else None
        if raster is None:
            raise ValueError(f"{path}: truncated PGM raster")
    else:
        raster = np.array(data[pos:].split(), dtype=np.int64)
        if raster.size < width * height:
            raise ValueError(f"{path}: truncated PGM raster")
        raster = raster[:width * height]
    img = raster.reshape(height, width).astype(float)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def encode_pgm(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a 2D image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image has non-finite pixels")
    raster = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = raster.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + raster.tobytes()


def write_pgm(path, img):
    """Write an 8-bit binary PGM (values rounded and clipped to [0, 255])."""
    atomic_write(path, encode_pgm(img))


# ----------------------------------------------------------------------------
# matrices
# ----------------------------------------------------------------------------

def encode_matrix(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    buf = io.StringIO()
    buf.write(f"# rows={M.shape[0]} cols={M.shape[1]} layout=column-signals\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in M:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue().encode("ascii")


def write_matrix(path, M):
    """Write a matrix as CSV rows; columns are signals (patches)."""
    atomic_write(path, encode_matrix(M))


def read_matrix(path):
    text = Path(path).read_text()
    lines = text.splitlines()
    header = None
    if lines and lines[0].startswith("#"):
        header = _MATRIX_HEADER.match(lines[0].strip())
        if header is None:
            raise ValueError(f"{path}: malformed matrix header {lines[0]!r}")
        lines = lines[1:]
    rows = [r for r in csv.reader(lines) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    try:
        M = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if header is not None:
        shape = (int(header.group(1)), int(header.group(2)))
        if M.shape != shape:
            raise ValueError(f"{path}: header says {shape}, found {M.shape}")
    return M


# ----------------------------------------------------------------------------
# flat key = value text (config files and manifests)
# ----------------------------------------------------------------------------

def read_kv(path):
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def encode_kv(mapping):
    return "".join(f"{k} = {v}\n" for k, v in mapping.items()).encode("utf-8")


# ----------------------------------------------------------------------------
# atomic output
# ----------------------------------------------------------------------------

def atomic_write(path, payload):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class OutputSet:
    """Stage several output files and publish them together.

    Nothing becomes visible under the final names unless :meth:`commit`
    succeeds; on error every staged file is removed.
    """

    def __init__(self):
        self._staged = []
        self._done = []

    def add(self, path, payload):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        self._staged.append((Path(tmp), path))

    def commit(self):
        try:
            for tmp, final in self._staged:
                os.replace(tmp, final)
                self._done.append(final)
        except BaseException:
            self.rollback()
            raise
        self._staged = []

    def rollback(self):
        for tmp, _ in self._staged:
            tmp.unlink(missing_ok=True)
        for final in self._done:
            final.unlink(missing_ok=True)
        self._staged, self._done = [], []

    @property
    def paths(self):
        return [final for _, final in self._staged] + self._done

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            self.rollback()
        return False
