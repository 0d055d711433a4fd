"""
Base Repository for the binary artifact containers (PIF1, PDC1, PSN1)
"""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Tuple, Union

import numpy as np

from ..core.errors import FileFormatError

PathLike = Union[str, Path]

U32 = np.dtype("<u4")
F32 = np.dtype("<f4")


class IRepository(ABC):
    """Interface for artifact persistence"""

    @abstractmethod
    def read(self, path: PathLike) -> Any:
        """Load one artifact"""
        pass

    @abstractmethod
    def write(self, obj: Any, path: PathLike) -> Path:
        """Store one artifact and return the written path"""
        pass


class BaseRepository(IRepository):
    """Common layout of the binary containers: 4-byte magic, little-endian u32 header, float32 payload"""

    magic: bytes = b""
    header_fields: int = 3

    def _encode(self, header: Tuple[int, ...], *payloads: np.ndarray) -> bytes:
        parts = [self.magic, np.asarray(header, dtype=U32).tobytes()]
        parts.extend(np.asarray(p, dtype=F32).ravel().tobytes() for p in payloads)
        return b"".join(parts)

    def _save(self, path: PathLike, data: bytes) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return path

    def _load(self, path: PathLike) -> Tuple[Tuple[int, ...], np.ndarray]:
        """Check magic and return (header, float32 payload)"""
        path = Path(path)
        data = path.read_bytes()
        header_end = len(self.magic) + 4 * self.header_fields
        if len(data) < header_end or data[: len(self.magic)] != self.magic:
            raise FileFormatError(f"{path}: not a {self.magic.decode()} file")
        header = tuple(int(v) for v in np.frombuffer(data, dtype=U32, count=self.header_fields, offset=len(self.magic)))
        payload = data[header_end:]
        if len(payload) % F32.itemsize:
            raise FileFormatError(f"{path}: truncated float32 payload")
        return header, np.frombuffer(payload, dtype=F32).astype(np.float64)

    @staticmethod
    def _expect(path: PathLike, payload: np.ndarray, count: int) -> None:
        if payload.size != count:
            raise FileFormatError(f"{path}: expected {count} samples, found {payload.size}")
