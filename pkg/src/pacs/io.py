"""Binary array files: PAIF images, PASG sinograms and 16-bit PGM previews."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import Grid
from .wave import SensorArc, Sinogram

_F32 = np.dtype("<f4")


def _read_header(buf: bytes, nlines: int) -> tuple[list[str], int]:
    lines, pos = [], 0
    for _ in range(nlines):
        end = buf.index(b"\n", pos)
        lines.append(buf[pos:end].decode("ascii"))
        pos = end + 1
    return lines, pos


def write_paif(path, values: np.ndarray, grid: Grid) -> None:
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"image shape {values.shape} does not match grid {grid.shape}")
    header = "PAIF1\n{0} {0}\n{1}\n".format(grid.n_side, " ".join(repr(float(e)) for e in grid.extent))
    Path(path).write_bytes(header.encode("ascii") + values.astype(_F32).tobytes(order="C"))


def read_paif(path) -> tuple[np.ndarray, Grid]:
    buf = Path(path).read_bytes()
    (magic, dims, ext), pos = _read_header(buf, 3)
    if magic != "PAIF1":
        raise ValueError(f"{path}: not a PAIF1 file")
    ny, nx = (int(v) for v in dims.split())
    if ny != nx:
        raise ValueError(f"{path}: non-square image {ny}x{nx}")
    grid = Grid(nx, tuple(float(v) for v in ext.split()))
    data = np.frombuffer(buf, dtype=_F32, count=nx * ny, offset=pos)
    return data.reshape(ny, nx).astype(np.float64), grid


def write_pasg(path, sino: Sinogram, angles: tuple[float, float] | None = None) -> None:
    """Write ``sino``; ``angles`` overrides the header arc (degrees).

    A full circle is recorded as ``0 360``.
    """
    arc = sino.arc
    if angles is None:
        angles = (0.0, 360.0) if arc.full_circle else (arc.angle_start, arc.angle_end)
    header = "PASG1\n{} {} {!r} {!r} {!r} {!r} {!r}\n".format(
        sino.channels, sino.Q, float(arc.radius), float(sino.T), float(sino.c), float(angles[0]), float(angles[1])
    )
    Path(path).write_bytes(header.encode("ascii") + sino.values.astype(_F32).tobytes(order="C"))


def read_pasg(path, sensors: int | None = None) -> Sinogram:
    """Read a PASG file.

    The header stores the channel count, which after compressed sampling
    differs from the sensor count; pass ``sensors`` to restore the physical
    arc, otherwise the channel count is used.
    """
    buf = Path(path).read_bytes()
    (magic, head), pos = _read_header(buf, 2)
    if magic != "PASG1":
        raise ValueError(f"{path}: not a PASG1 file")
    fields = head.split()
    channels, Q = int(fields[0]), int(fields[1])
    R, _T, c, a0, a1 = (float(v) for v in fields[2:7])
    count = sensors if sensors is not None else channels
    if a0 == 0.0 and a1 == 360.0:
        arc = SensorArc(count, R)
    else:
        arc = SensorArc(count, R, a0, a1)
    data = np.frombuffer(buf, dtype=_F32, count=channels * Q, offset=pos)
    return Sinogram(data.reshape(channels, Q).astype(np.float64), arc, c)


def write_pgm(path, values: np.ndarray) -> None:
    """16-bit binary PGM with the value range mapped linearly onto [0, 65535]."""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    scaled = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    pix = np.round(scaled * 65535).astype(">u2")
    ny, nx = values.shape
    Path(path).write_bytes(f"P5\n{nx} {ny}\n65535\n".encode("ascii") + pix.tobytes())
