"""Time-tag streams and the QTAG binary file format.

A tag stream is the SSOT for every analysis in this package: an ordered
sequence of (timestamp, channel) detection records at fixed resolution
(1 ps by default, matching TCSPC-style integer ticks).

QTAG file layout (little-endian):
    64-byte header: magic "QTAG", version u16, resolution_ps u32,
                    channel_count u16, record_count u64, zero padding
    records:        16 bytes each: timestamp u64, channel u16, 6 zero bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"QTAG"
VERSION = 1
HEADER_SIZE = 64
_HEADER_FMT = "<4sHIHQ44x"
_RECORD_DTYPE = np.dtype([("timestamp", "<u8"), ("channel", "<u2"), ("pad", "V6")])

assert struct.calcsize(_HEADER_FMT) == HEADER_SIZE
assert _RECORD_DTYPE.itemsize == 16


class TagFileError(ValueError):
    """Raised for malformed QTAG files."""


@dataclass(frozen=True)
class TagStream:
    """Ordered detection records with resolution metadata.

    timestamps are uint64 ticks of `resolution_ps` picoseconds each and must
    be non-decreasing; channels index into 0..channel_count-1. metadata
    carries provenance (scenario digest, seed, duration) and is not part of
    the binary format.
    """

    resolution_ps: int
    timestamps: np.ndarray
    channels: np.ndarray
    channel_count: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        ts = np.ascontiguousarray(self.timestamps, dtype=np.uint64)
        ch = np.ascontiguousarray(self.channels, dtype=np.uint16)
        if ts.shape != ch.shape or ts.ndim != 1:
            raise ValueError("timestamps and channels must be 1-d and equal length")
        if self.resolution_ps < 1:
            raise ValueError(f"resolution_ps must be >= 1, got {self.resolution_ps}")
        if self.channel_count < 1:
            raise ValueError(f"channel_count must be >= 1, got {self.channel_count}")
        if ts.size and np.any(ts[1:] < ts[:-1]):
            raise ValueError("timestamps must be non-decreasing")
        if ch.size and int(ch.max()) >= self.channel_count:
            raise ValueError(
                f"channel {int(ch.max())} outside declared range "
                f"0..{self.channel_count - 1}"
            )
        ts.flags.writeable = False
        ch.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "channels", ch)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def channel_times(self, channel: int) -> np.ndarray:
        """Timestamps (uint64 ticks, sorted) of one channel."""
        return self.timestamps[self.channels == channel]

    def counts_per_channel(self) -> np.ndarray:
        return np.bincount(self.channels, minlength=self.channel_count)

    @property
    def duration_s(self) -> float:
        """Integration time: from metadata if recorded, else the tag span."""
        if "duration_s" in self.metadata:
            return float(self.metadata["duration_s"])
        if len(self) < 2:
            return 0.0
        span = int(self.timestamps[-1]) - int(self.timestamps[0])
        return span * self.resolution_ps * 1e-12


def write_qtag(stream: TagStream, path) -> None:
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["timestamp"] = stream.timestamps
    records["channel"] = stream.channels
    header = struct.pack(
        _HEADER_FMT,
        MAGIC,
        VERSION,
        stream.resolution_ps,
        stream.channel_count,
        len(stream),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        records.tofile(fh)


def read_qtag(path) -> TagStream:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) != HEADER_SIZE:
            raise TagFileError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, resolution_ps, channel_count, record_count = struct.unpack(
            _HEADER_FMT, header
        )
        if magic != MAGIC:
            raise TagFileError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise TagFileError(f"{path}: unsupported version {version}")
        records = np.fromfile(fh, dtype=_RECORD_DTYPE)
    if records.size != record_count:
        raise TagFileError(
            f"{path}: header promises {record_count} records, found {records.size}"
        )
    return TagStream(
        resolution_ps=resolution_ps,
        timestamps=records["timestamp"].copy(),
        channels=records["channel"].copy(),
        channel_count=channel_count,
        metadata={"path": str(path)},
    )
