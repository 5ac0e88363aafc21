"""Wire recording: every message a round puts on the bus, in order.

Transcript files open with the magic "PQFLTR1" and a 32-byte scenario-config
hash, followed by length-prefixed records (phase tag byte, round, sender,
payload).  The recorded bytes are exactly what an eavesdropper on the bus
would capture, which is what the harvest tooling replays.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

MAGIC = b"PQFLTR1"
AGGREGATOR_ID = 0xFFFFFFFF

PHASE_SETUP = "S"
PHASE_SUBMIT = "B"
PHASE_GLOBAL = "C"

SUITE_PLAINTEXT = 0
SUITE_RSA = 1
SUITE_PQC = 2
SUITE_NAMES = {SUITE_PLAINTEXT: "plaintext", SUITE_RSA: "rsa_toy", SUITE_PQC: "pqc"}


class TranscriptFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TranscriptMessage:
    sender: int
    phase: str
    payload: bytes

    def __post_init__(self) -> None:
        if self.phase not in (PHASE_SETUP, PHASE_SUBMIT, PHASE_GLOBAL):
            raise TranscriptFormatError(f"unknown phase tag {self.phase!r}")


@dataclass
class RoundTranscript:
    round: int
    messages: list[TranscriptMessage] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def bytes_on_wire(self) -> int:
        return sum(len(m.payload) for m in self.messages)


def encode_setup_payload(suite: int, quant_scale: int, key_bytes: bytes) -> bytes:
    return struct.pack("<BI", suite, quant_scale) + key_bytes


def decode_setup_payload(payload: bytes) -> tuple[int, int, bytes]:
    if len(payload) < 5:
        raise TranscriptFormatError("setup payload too short")
    suite, quant_scale = struct.unpack_from("<BI", payload, 0)
    if suite not in SUITE_NAMES:
        raise TranscriptFormatError(f"unknown suite tag {suite}")
    return suite, quant_scale, payload[5:]


def dump_transcripts(
    transcripts: list[RoundTranscript], path: str | Path, config_hash: bytes
) -> None:
    if len(config_hash) != 32:
        raise ValueError("config hash must be 32 bytes")
    with open(path, "wb") as fh:
        fh.write(MAGIC + config_hash)
        for rt in transcripts:
            for msg in rt.messages:
                body = (
                    msg.phase.encode("ascii")
                    + struct.pack("<II", rt.round, msg.sender)
                    + msg.payload
                )
                fh.write(struct.pack("<I", len(body)) + body)


def load_transcripts(
    path: str | Path, expected_hash: bytes | None = None, strict: bool = False
) -> tuple[list[RoundTranscript], bytes]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise TranscriptFormatError(f"bad magic: expected {MAGIC!r}")
    if len(data) < len(MAGIC) + 32:
        raise TranscriptFormatError("truncated header")
    config_hash = data[len(MAGIC) : len(MAGIC) + 32]
    if expected_hash is not None and config_hash != expected_hash:
        message = "transcript config hash does not match the declared scenario"
        if strict:
            raise TranscriptFormatError(message)
        warnings.warn(message, stacklevel=2)

    offset = len(MAGIC) + 32
    rounds: dict[int, RoundTranscript] = {}
    order: list[int] = []
    index = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise TranscriptFormatError(f"record {index}: truncated length prefix")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data) or length < 9:
            raise TranscriptFormatError(f"record {index}: truncated body")
        body = data[offset : offset + length]
        offset += length
        phase = body[0:1].decode("ascii")
        round_no, sender = struct.unpack_from("<II", body, 1)
        if round_no not in rounds:
            rounds[round_no] = RoundTranscript(round=round_no)
            order.append(round_no)
        rounds[round_no].messages.append(TranscriptMessage(sender, phase, body[9:]))
        index += 1
    return [rounds[r] for r in order], config_hash
