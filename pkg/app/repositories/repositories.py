"""
Concrete repository implementations for each artifact type
"""
import math
import re
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from .base import BaseRepository, IRepository, PathLike
from ..core.errors import FileFormatError, ShapeMismatchError
from ..models import Dictionary, Image, Sinogram
from ..schemas import Geometry, SolveReport


class ImageRepository(BaseRepository):
    """PIF1 images (bit-exact float32) plus PGM P5 import/export"""

    magic = b"PIF1"

    def write(self, img: Image, path: PathLike) -> Path:
        return self._save(path, self._encode((img.width, img.height, img.channels), img.samples))

    def read(self, path: PathLike) -> Image:
        if Path(path).suffix.lower() == ".pgm":
            return self.read_pgm(path)
        (width, height, channels), payload = self._load(path)
        self._expect(path, payload, width * height * channels)
        return Image(payload.reshape(channels, height, width))

    def write_pgm(self, img: Image, path: PathLike, bits: int = 8, normalize: bool = False) -> Path:
        """Scalar image to P5; [0, 1] maps to [0, maxval] (or min-max when ``normalize``)"""
        if img.channels != 1:
            raise ShapeMismatchError("PGM export handles scalar images only")
        if bits not in (8, 16):
            raise FileFormatError(f"PGM depth must be 8 or 16 bits, got {bits}")
        plane = img.channel(0)
        if normalize:
            lo, hi = float(plane.min()), float(plane.max())
            plane = (plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane)
        maxval = 255 if bits == 8 else 65535
        levels = np.rint(np.clip(plane, 0.0, 1.0) * maxval)
        dtype = np.dtype("u1") if bits == 8 else np.dtype(">u2")
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
        return self._save(path, header + levels.astype(dtype).tobytes())

    def read_pgm(self, path: PathLike) -> Image:
        """P5 file to a [0, 1] scalar image"""
        data = Path(path).read_bytes()
        # magic, width, height, maxval separated by whitespace and comments
        tokens = []
        pos = 0
        token_re = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")
        for _ in range(4):
            match = token_re.match(data, pos)
            if match is None:
                raise FileFormatError(f"{path}: truncated PGM header")
            tokens.append(match.group(1))
            pos = match.end()
        if tokens[0] != b"P5":
            raise FileFormatError(f"{path}: not a binary PGM (P5) file")
        try:
            width, height, maxval = (int(t) for t in tokens[1:])
        except ValueError as exc:
            raise FileFormatError(f"{path}: malformed PGM header") from exc
        if not 0 < maxval < 65536:
            raise FileFormatError(f"{path}: PGM maxval {maxval} out of range")
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        pos += 1  # single whitespace before the raster
        count = width * height
        if len(data) - pos < count * dtype.itemsize:
            raise FileFormatError(f"{path}: truncated PGM raster")
        raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float64)
        return Image(raster.reshape(height, width) / maxval)


class DictionaryRepository(BaseRepository):
    """PDC1 dictionaries: m, channels, K, then atom-major float32 samples"""

    magic = b"PDC1"

    def write(self, dictionary: Dictionary, path: PathLike) -> Path:
        header = (dictionary.patch_size, dictionary.channels, dictionary.n_atoms)
        return self._save(path, self._encode(header, dictionary.atoms))

    def read(self, path: PathLike) -> Dictionary:
        (m, channels, n_atoms), payload = self._load(path)
        self._expect(path, payload, n_atoms * channels * m * m)
        return Dictionary(payload.reshape(n_atoms, channels, m, m))


def default_image_size(n_detectors: int, detector_spacing: float = 1.0) -> int:
    """Largest image side whose diagonal fits the detector row"""
    return max(1, int(math.floor(n_detectors * detector_spacing / math.sqrt(2.0))))


class SinogramRepository(BaseRepository):
    """PSN1 sinograms: n_angles, n_detectors, channels, float32 angles, then samples.

    The container carries no image side, spacing or rotation center; the
    reader takes them from the caller (unit spacing, middle center by default).
    """

    magic = b"PSN1"

    def write(self, sino: Sinogram, path: PathLike) -> Path:
        g = sino.geometry
        header = (g.n_angles, g.n_detectors, sino.channels)
        return self._save(path, self._encode(header, sino.angles, sino.samples))

    def read(
        self,
        path: PathLike,
        image_size: Optional[int] = None,
        detector_spacing: float = 1.0,
        rotation_center: Optional[float] = None,
    ) -> Sinogram:
        (n_angles, n_detectors, channels), payload = self._load(path)
        self._expect(path, payload, n_angles + n_angles * n_detectors * channels)
        geometry = Geometry(
            image_size=image_size or default_image_size(n_detectors, detector_spacing),
            angles=payload[:n_angles].tolist(),
            n_detectors=n_detectors,
            detector_spacing=detector_spacing,
            rotation_center=rotation_center,
        )
        return Sinogram(geometry, payload[n_angles:].reshape(channels, n_angles, n_detectors))


class ReportRepository(IRepository):
    """Solve reports and result tables as CSV"""

    def write(self, report: Union[SolveReport, pd.DataFrame], path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = report.to_frame() if isinstance(report, SolveReport) else report
        frame.to_csv(path, index=False, float_format="%.10g")
        return path

    def read(self, path: PathLike) -> pd.DataFrame:
        return pd.read_csv(path)


class MetricsRepository(IRepository):
    """Flat ``key=value`` text summaries"""

    def write(self, metrics: Dict[str, object], path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.format(metrics))
        return path

    def read(self, path: PathLike) -> Dict[str, object]:
        metrics: Dict[str, object] = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FileFormatError(f"{path}: line without '=': {line!r}")
            metrics[key.strip()] = _parse_value(value.strip())
        return metrics

    @staticmethod
    def format(metrics: Dict[str, object]) -> str:
        lines = []
        for key, value in metrics.items():
            if isinstance(value, float):
                value = f"{value:.10g}"
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def _parse_value(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text
