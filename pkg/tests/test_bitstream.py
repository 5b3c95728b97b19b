"""Container format: header packing, frame framing, error detection."""

import struct

import pytest

from yuvc.bitstream import (FRAME_INTER, FRAME_INTRA, FRAME_RESIDUAL, MAGIC,
                            MODE_CONDITIONAL, MODE_RESIDUAL, VERSION,
                            EncodedFrame, SequenceBitstream, SequenceHeader)
from yuvc.entropy.chunks import BitChunk
from yuvc.errors import BitstreamError


def _header(**kw):
    # lambda_i must be exactly representable in float32 for roundtrip equality
    base = dict(width=64, height=48, frame_count=2, gop_size=12,
                mode=MODE_CONDITIONAL, lambda_p_index=1, lambda_i=0.25,
                model_hash=bytes(range(16)))
    base.update(kw)
    return SequenceHeader(**base)


def _stream():
    return SequenceBitstream(_header(), [
        EncodedFrame(FRAME_INTRA, [BitChunk(5, b"tail!"), BitChunk(0, b"")]),
        EncodedFrame(FRAME_INTER, [BitChunk(3, b"xyz")]),
    ])


class TestHeader:
    def test_pack_unpack_roundtrip(self):
        h = _header()
        again = SequenceHeader.unpack(h.pack())
        assert again == h

    def test_packed_layout(self):
        raw = _header().pack()
        assert raw[:4] == MAGIC == b"YVC1"
        assert raw[4] == VERSION
        assert struct.unpack_from("<I", raw, 8)[0] == 64   # width
        assert struct.unpack_from("<I", raw, 12)[0] == 48  # height
        assert raw[-16:] == bytes(range(16))

    def test_lambda_i_rounds_through_float32(self):
        h = _header(lambda_i=0.05)
        again = SequenceHeader.unpack(h.pack())
        assert again.lambda_i != 0.05  # f32 storage
        assert again.lambda_i == pytest.approx(0.05, rel=1e-7)

    def test_bad_magic(self):
        raw = bytearray(_header().pack())
        raw[0] = ord("X")
        with pytest.raises(BitstreamError, match="magic"):
            SequenceHeader.unpack(bytes(raw))

    def test_unsupported_version(self):
        raw = bytearray(_header().pack())
        raw[4] = 99
        with pytest.raises(BitstreamError, match="version"):
            SequenceHeader.unpack(bytes(raw))

    def test_truncated_header(self):
        with pytest.raises(BitstreamError, match="truncated"):
            SequenceHeader.unpack(_header().pack()[:10])

    def test_model_hash_must_be_16_bytes(self):
        with pytest.raises(ValueError, match="16 bytes"):
            _header(model_hash=b"short")

    def test_mode_validated(self):
        with pytest.raises(ValueError, match="mode"):
            _header(mode=3)
        assert _header(mode=MODE_RESIDUAL).mode == 1


class TestSequence:
    def test_serialize_roundtrip(self):
        stream = _stream()
        data = stream.serialize()
        again = SequenceBitstream.deserialize(data)
        assert again.header == stream.header
        assert len(again.frames) == 2
        for a, b in zip(again.frames, stream.frames):
            assert a.frame_type == b.frame_type
            assert a.chunks == b.chunks

    def test_total_bits_equals_serialized_size(self):
        stream = _stream()
        assert stream.total_bits == len(stream.serialize()) * 8

    def test_bpp_uses_original_dimensions(self):
        stream = _stream()
        assert stream.bpp == pytest.approx(stream.total_bits / (64 * 48 * 2))

    def test_frame_count_mismatch_rejected_on_serialize(self):
        stream = _stream()
        stream.frames.pop()
        with pytest.raises(BitstreamError, match="header says 2"):
            stream.serialize()

    def test_truncation_detected(self):
        data = _stream().serialize()
        for cut in (len(data) - 1, len(data) - 6, 40):
            with pytest.raises(BitstreamError):
                SequenceBitstream.deserialize(data[:cut])

    def test_trailing_garbage_detected(self):
        data = _stream().serialize()
        with pytest.raises(BitstreamError, match="trailing"):
            SequenceBitstream.deserialize(data + b"\x00")

    def test_bad_frame_type_detected(self):
        stream = _stream()
        stream.frames[1].frame_type = 9
        with pytest.raises(BitstreamError, match="frame type"):
            stream.serialize()
        good = _stream().serialize()
        # frame 0 type byte sits right after the header
        header_size = len(_header().pack())
        raw = bytearray(good)
        raw[header_size] = 7
        with pytest.raises(BitstreamError, match="frame type 7"):
            SequenceBitstream.deserialize(bytes(raw))

    def test_frame_types_cover_residual_mode(self):
        stream = SequenceBitstream(
            _header(mode=MODE_RESIDUAL),
            [EncodedFrame(FRAME_INTRA, []), EncodedFrame(FRAME_RESIDUAL, [])])
        again = SequenceBitstream.deserialize(stream.serialize())
        assert [f.frame_type for f in again.frames] == [FRAME_INTRA, FRAME_RESIDUAL]

    def test_empty_sequence(self):
        stream = SequenceBitstream(_header(frame_count=0), [])
        again = SequenceBitstream.deserialize(stream.serialize())
        assert again.frames == []
        assert again.total_bits == len(stream.serialize()) * 8
