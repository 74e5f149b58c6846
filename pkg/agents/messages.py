"""
Messages exchanged between a client and the split server, and a binary
round-trace format for replaying them.

Trace records are little-endian and length-prefixed:

    u8 kind | u32 payload_length | payload

UpLink payload:   i32 round, i32 client, u64 nonce, u32 pairs, u32 rows,
                  u32 width, f64[rows*width] h, then for each pair
                  f64[rows*width] h+ and f64[rows*width] h-, i64[rows] labels
DownLink payload: i32 round, i32 client, u64 nonce, u32 count, f64[count] deltas
"""

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np

UPLINK = 1
DOWNLINK = 2

_RECORD_HEADER = struct.Struct("<BI")
_UP_HEADER = struct.Struct("<iiQIII")
_DOWN_HEADER = struct.Struct("<iiQI")


@dataclass(frozen=True)
class UpLink:
    """Cut-layer embeddings for one round: h and one (h+, h-) pair per direction."""

    h: np.ndarray
    perturbed: tuple[tuple[np.ndarray, np.ndarray], ...]
    labels: np.ndarray
    nonce: int

    @property
    def h_plus(self) -> np.ndarray:
        return self.perturbed[0][0]

    @property
    def h_minus(self) -> np.ndarray:
        return self.perturbed[0][1]

    @property
    def num_matrices(self) -> int:
        return 1 + 2 * len(self.perturbed)

    @property
    def num_scalars(self) -> int:
        """Embedding entries sent up (labels are not counted)."""
        return self.num_matrices * self.h.size


@dataclass(frozen=True)
class DownLink:
    """Loss differences returned to the client, one scalar per direction."""

    deltas: tuple[float, ...]
    nonce: int

    @property
    def delta(self) -> float:
        return self.deltas[0]

    @property
    def num_scalars(self) -> int:
        return len(self.deltas)


def _f64(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f8").tobytes()


class RoundTraceWriter:
    """Appends UpLink/DownLink records to a binary trace file."""

    def __init__(self, path):
        self.path = path
        self._fh: BinaryIO = open(path, "wb")

    def _write(self, kind: int, payload: bytes):
        self._fh.write(_RECORD_HEADER.pack(kind, len(payload)))
        self._fh.write(payload)

    def write_uplink(self, round_num: int, client_id: int, msg: UpLink):
        rows, width = msg.h.shape
        parts = [
            _UP_HEADER.pack(round_num, client_id, msg.nonce, len(msg.perturbed), rows, width),
            _f64(msg.h),
        ]
        for h_plus, h_minus in msg.perturbed:
            parts.append(_f64(h_plus))
            parts.append(_f64(h_minus))
        parts.append(np.ascontiguousarray(msg.labels, dtype="<i8").tobytes())
        self._write(UPLINK, b"".join(parts))

    def write_downlink(self, round_num: int, client_id: int, msg: DownLink):
        payload = _DOWN_HEADER.pack(round_num, client_id, msg.nonce, len(msg.deltas))
        payload += np.asarray(msg.deltas, dtype="<f8").tobytes()
        self._write(DOWNLINK, payload)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class TraceRecord:
    kind: int
    round_num: int
    client_id: int
    message: UpLink | DownLink


def _parse_uplink(payload: bytes) -> TraceRecord:
    round_num, client_id, nonce, pairs, rows, width = _UP_HEADER.unpack_from(payload)
    offset = _UP_HEADER.size
    block = rows * width * 8

    def take_matrix():
        nonlocal offset
        matrix = np.frombuffer(payload, dtype="<f8", count=rows * width, offset=offset)
        offset += block
        return matrix.reshape(rows, width).astype(np.float64)

    h = take_matrix()
    perturbed = tuple((take_matrix(), take_matrix()) for _ in range(pairs))
    labels = np.frombuffer(payload, dtype="<i8", count=rows, offset=offset).astype(np.int64)
    return TraceRecord(UPLINK, round_num, client_id, UpLink(h, perturbed, labels, nonce))


def _parse_downlink(payload: bytes) -> TraceRecord:
    round_num, client_id, nonce, count = _DOWN_HEADER.unpack_from(payload)
    deltas = np.frombuffer(payload, dtype="<f8", count=count, offset=_DOWN_HEADER.size)
    return TraceRecord(
        DOWNLINK, round_num, client_id, DownLink(tuple(float(v) for v in deltas), nonce)
    )


def read_round_trace(path) -> Iterator[TraceRecord]:
    """Yield the records of a trace file in write order."""
    with open(path, "rb") as fh:
        while True:
            header = fh.read(_RECORD_HEADER.size)
            if not header:
                return
            if len(header) < _RECORD_HEADER.size:
                raise ValueError(f"Truncated record header in {path}")
            kind, length = _RECORD_HEADER.unpack(header)
            payload = fh.read(length)
            if len(payload) != length:
                raise ValueError(f"Truncated record payload in {path}")
            if kind == UPLINK:
                yield _parse_uplink(payload)
            elif kind == DOWNLINK:
                yield _parse_downlink(payload)
            else:
                raise ValueError(f"Unknown record kind {kind} in {path}")
