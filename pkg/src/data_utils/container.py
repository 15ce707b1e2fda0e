import math
import struct
import zlib
from enum import IntEnum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.errors import ValidationFailure

MAGIC = b"RRA1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_CRC = struct.Struct("<I")


class ContainerKind(IntEnum):
    CART_IMAGE = 1
    POLAR_IMAGE = 2
    BESSEL_IMAGE = 3
    SPH_VOLUME = 4
    KERNEL = 5
    BASIS = 6
    LANDSCAPE = 7


class ContainerDtype(IntEnum):
    FLOAT64 = 0
    COMPLEX128 = 1


_NUMPY_DTYPES = {
    ContainerDtype.FLOAT64: np.dtype("<f8"),
    ContainerDtype.COMPLEX128: np.dtype("<c16"),
}


def encode_container(kind: ContainerKind, array: np.ndarray) -> bytes:
    """
    Serialize an array: magic, version, kind, dtype and ndim as little-endian u32, one
    u64 per dimension, the row-major payload, then the CRC32 of the payload.
    """
    array = np.asarray(array)
    code = ContainerDtype.COMPLEX128 if np.iscomplexobj(array) else ContainerDtype.FLOAT64
    payload = np.ascontiguousarray(array, dtype=_NUMPY_DTYPES[code]).tobytes()
    header = _HEADER.pack(MAGIC, VERSION, int(kind), int(code), array.ndim)
    dims = struct.pack(f"<{array.ndim}Q", *array.shape)
    return header + dims + payload + _CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)


def decode_container(blob: bytes, kind: Optional[ContainerKind] = None) -> Tuple[ContainerKind, np.ndarray]:
    """
    Raises:
        ValidationFailure: On a bad magic, version, kind, size or checksum.
    """
    if len(blob) < _HEADER.size + _CRC.size:
        raise ValidationFailure("Container is truncated")
    magic, version, kind_code, dtype_code, ndim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValidationFailure(f"Not a container file (magic {magic!r})")
    if version != VERSION:
        raise ValidationFailure(f"Unsupported container version {version}")
    try:
        found_kind = ContainerKind(kind_code)
        dtype = _NUMPY_DTYPES[ContainerDtype(dtype_code)]
    except ValueError as exc:
        raise ValidationFailure(f"Unknown container kind or dtype ({kind_code}, {dtype_code})") from exc
    if kind is not None and found_kind != kind:
        raise ValidationFailure(f"Expected a {kind.name} container, found {found_kind.name}")
    offset = _HEADER.size
    if len(blob) < offset + 8 * ndim + _CRC.size:
        raise ValidationFailure("Container is truncated")
    shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
    offset += 8 * ndim
    payload = blob[offset:-_CRC.size]
    if any(dim > np.iinfo(np.intp).max for dim in shape) or len(payload) != math.prod(shape) * dtype.itemsize:
        raise ValidationFailure(f"Payload of {len(payload)} bytes does not match dims {shape}")
    (crc,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if crc != zlib.crc32(payload) & 0xFFFFFFFF:
        raise ValidationFailure("Container checksum mismatch")
    return found_kind, np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_container(path: Union[str, Path], kind: ContainerKind, array: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode_container(kind, array))
    except OSError as exc:
        raise ValidationFailure(f"Cannot write container {path}: {exc}") from exc
    return path


def read_container(path: Union[str, Path], kind: Optional[ContainerKind] = None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ValidationFailure(f"Container file not found: {path}")
    return decode_container(path.read_bytes(), kind)[1]
