"""Constellation generators and CSV I/O.

All generated alphabets have unit average energy, the normalization under
which transmit power S is applied at simulation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Constellation",
    "make_psk",
    "make_qam",
    "make_pam",
    "load_constellation",
    "save_constellation",
]


@dataclass(frozen=True)
class Constellation:
    """Ordered alphabet of M distinct complex points.

    energy_warning is set by load_constellation when a file's mean energy
    is not ~1 (optimizer inputs may arrive unnormalized); generators always
    produce unit energy.
    """

    points: np.ndarray
    label: str = ""
    energy_warning: bool = field(default=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).reshape(-1)
        if pts.size < 2:
            raise ValueError("a constellation needs at least 2 points")
        if not np.all(np.isfinite(pts.view(float))):
            raise ValueError("constellation points must be finite")
        # pairwise distinctness (exact: duplicates break every detector)
        if np.unique(pts).size != pts.size:
            raise ValueError("constellation points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    @property
    def mean_energy(self):
        return float(np.mean(np.abs(self.points) ** 2))

    def min_distance(self):
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(np.min(d[np.triu_indices(len(self), k=1)]))


def make_psk(M):
    """M points on the unit circle, e^{j 2 pi i / M}."""
    M = int(M)
    if M < 2:
        raise ValueError("PSK order must be >= 2")
    pts = np.exp(2j * math.pi * np.arange(M) / M)
    return Constellation(pts, label=f"{M}-PSK")


def _cross_qam_grid(M):
    # odd-power-of-two orders use the cross layouts: a rectangle or square
    # with its corner cells removed
    if M == 8:  # 3x4 minus the four corners
        rows, cols, corner = 3, 4, 1
    elif M == 32:  # 6x6 minus the four corners
        rows, cols, corner = 6, 6, 1
    elif M == 128:  # 12x12 minus 2x2 corner blocks
        rows, cols, corner = 12, 12, 2
    else:
        raise ValueError(f"unsupported QAM order {M}")
    re = np.arange(cols) * 2.0 - (cols - 1)
    im = np.arange(rows) * 2.0 - (rows - 1)
    pts = []
    for i, y in enumerate(im):
        for j, x in enumerate(re):
            in_corner = (i < corner or i >= rows - corner) and (
                j < corner or j >= cols - corner
            )
            if not in_corner:
                pts.append(x + 1j * y)
    assert len(pts) == M
    return np.array(pts)


def make_qam(M):
    """Square QAM for M in {4,16,64,256}, cross QAM for M in {8,32,128}."""
    M = int(M)
    side = math.isqrt(M)
    if side * side == M and M in (4, 16, 64, 256):
        levels = np.arange(side) * 2.0 - (side - 1)
        pts = (levels[None, :] + 1j * levels[:, None]).reshape(-1)
    else:
        pts = _cross_qam_grid(M)
    pts = pts / math.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(pts, label=f"{M}-QAM")


def make_pam(M):
    """Real levels +-1, +-3, ..., +-(M-1), scaled by 1/sqrt((M^2-1)/3)."""
    M = int(M)
    if M < 2:
        raise ValueError("PAM order must be >= 2")
    levels = 2.0 * np.arange(M) - (M - 1)
    pts = levels / math.sqrt((M * M - 1) / 3.0)
    return Constellation(pts.astype(complex), label=f"{M}-PAM")


def save_constellation(c, path):
    """Write `index,re,im` CSV with exact double round-trip formatting."""
    with open(path, "w", newline="") as f:
        f.write("index,re,im\n")
        for i, p in enumerate(c.points):
            f.write(f"{i},{float(p.real)!r},{float(p.imag)!r}\n")


def load_constellation(path, label=None):
    """Read an `index,re,im` CSV; flags (not rejects) non-unit mean energy."""
    with open(path) as f:
        header = f.readline().strip()
        if header != "index,re,im":
            raise ValueError(f"expected header 'index,re,im', got {header!r}")
        pts = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields")
            try:
                idx, re, im = int(parts[0]), float(parts[1]), float(parts[2])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if idx != len(pts):
                raise ValueError(f"{path}:{lineno}: indices must be 0,1,2,...")
            pts.append(re + 1j * im)
    arr = np.array(pts)
    energy = float(np.mean(np.abs(arr) ** 2))
    warn = abs(energy - 1.0) > 1e-6
    return Constellation(
        arr, label=label or f"file:{path}", energy_warning=warn
    )
