import numpy as np
import pytest

from qcomb.tags import TagFileError, TagStream, read_qtag, write_qtag


def small_stream():
    return TagStream(
        resolution_ps=1,
        timestamps=np.array([10, 20, 20, 35], dtype=np.uint64),
        channels=np.array([0, 1, 0, 1], dtype=np.uint16),
        channel_count=2,
        metadata={"duration_s": 1.0},
    )


class TestTagStream:
    def test_non_decreasing_enforced(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            TagStream(
                resolution_ps=1,
                timestamps=np.array([10, 5], dtype=np.uint64),
                channels=np.array([0, 1], dtype=np.uint16),
                channel_count=2,
            )

    def test_channel_range_enforced(self):
        with pytest.raises(ValueError, match="channel"):
            TagStream(
                resolution_ps=1,
                timestamps=np.array([1, 2], dtype=np.uint64),
                channels=np.array([0, 2], dtype=np.uint16),
                channel_count=2,
            )

    def test_arrays_frozen(self):
        s = small_stream()
        with pytest.raises(ValueError):
            s.timestamps[0] = 0

    def test_channel_times(self):
        s = small_stream()
        np.testing.assert_array_equal(s.channel_times(0), [10, 20])
        np.testing.assert_array_equal(s.channel_times(1), [20, 35])

    def test_duration_from_metadata(self):
        assert small_stream().duration_s == 1.0

    def test_counts_per_channel(self):
        np.testing.assert_array_equal(small_stream().counts_per_channel(), [2, 2])


class TestQtagFile:
    def test_roundtrip(self, tmp_path):
        s = small_stream()
        path = tmp_path / "run.qtag"
        write_qtag(s, path)
        back = read_qtag(path)
        np.testing.assert_array_equal(back.timestamps, s.timestamps)
        np.testing.assert_array_equal(back.channels, s.channels)
        assert back.resolution_ps == 1
        assert back.channel_count == 2

    def test_file_layout(self, tmp_path):
        s = small_stream()
        path = tmp_path / "run.qtag"
        write_qtag(s, path)
        raw = path.read_bytes()
        assert raw[:4] == b"QTAG"
        assert len(raw) == 64 + 16 * len(s)
        # first record: u64 timestamp little-endian, u16 channel, 6 zero bytes
        assert int.from_bytes(raw[64:72], "little") == 10
        assert int.from_bytes(raw[72:74], "little") == 0
        assert raw[74:80] == b"\x00" * 6

    def test_u64_range_supported(self, tmp_path):
        big = 2**63 + 17  # beyond signed range
        s = TagStream(
            resolution_ps=1,
            timestamps=np.array([1, big], dtype=np.uint64),
            channels=np.array([0, 1], dtype=np.uint16),
            channel_count=2,
        )
        path = tmp_path / "big.qtag"
        write_qtag(s, path)
        assert int(read_qtag(path).timestamps[1]) == big

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.qtag"
        path.write_bytes(b"NOPE" + b"\x00" * 60)
        with pytest.raises(TagFileError, match="magic"):
            read_qtag(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "short.qtag"
        path.write_bytes(b"QTAG" + b"\x00" * 10)
        with pytest.raises(TagFileError, match="truncated"):
            read_qtag(path)

    def test_record_count_mismatch_rejected(self, tmp_path):
        s = small_stream()
        path = tmp_path / "run.qtag"
        write_qtag(s, path)
        raw = bytearray(path.read_bytes())
        raw[12:20] = (99).to_bytes(8, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(TagFileError, match="records"):
            read_qtag(path)
