"""Minimal structural reader for the SMF subset the package writes.

Independent of the writer: walks chunk framing, delta times and the
event encodings byte by byte, raising on anything unexpected.  Running
status is deliberately unsupported; the writer never uses it.
"""

import struct


class SmfReadError(Exception):
    pass


def read_vlq(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise SmfReadError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise SmfReadError("variable-length quantity over four bytes")


def _read_track(payload: bytes) -> list[dict]:
    events: list[dict] = []
    tick = 0
    pos = 0
    ended = False
    while pos < len(payload):
        if ended:
            raise SmfReadError("data after end-of-track")
        delta, pos = read_vlq(payload, pos)
        tick += delta
        status = payload[pos]
        pos += 1
        if status == 0xFF:
            meta = payload[pos]
            pos += 1
            length, pos = read_vlq(payload, pos)
            data = payload[pos : pos + length]
            if len(data) < length:
                raise SmfReadError("truncated meta event")
            pos += length
            if meta == 0x2F:
                ended = True
            events.append({"tick": tick, "type": "meta", "meta": meta, "data": data})
        elif status & 0xF0 in (0x80, 0x90):
            note, velocity = payload[pos], payload[pos + 1]
            pos += 2
            events.append(
                {
                    "tick": tick,
                    "type": "note_on" if status & 0xF0 == 0x90 else "note_off",
                    "channel": status & 0x0F,
                    "note": note,
                    "velocity": velocity,
                }
            )
        else:
            raise SmfReadError(f"unsupported status byte 0x{status:02x}")
    if not ended:
        raise SmfReadError("track missing end-of-track meta")
    return events


def read_smf(data: bytes) -> dict:
    if len(data) < 14 or data[:4] != b"MThd":
        raise SmfReadError("missing MThd header")
    header_len, fmt, ntracks, division = struct.unpack(">IHHH", data[4:14])
    if header_len != 6:
        raise SmfReadError(f"unexpected header length {header_len}")
    tracks = []
    pos = 14
    for _ in range(ntracks):
        if data[pos : pos + 4] != b"MTrk":
            raise SmfReadError("missing MTrk chunk")
        (length,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        payload = data[pos + 8 : pos + 8 + length]
        if len(payload) < length:
            raise SmfReadError("truncated track chunk")
        tracks.append(_read_track(payload))
        pos += 8 + length
    if pos != len(data):
        raise SmfReadError("trailing bytes after the last track")
    return {"format": fmt, "division": division, "tracks": tracks}


def notes_of(track: list[dict]) -> list[dict]:
    return [e for e in track if e["type"] in ("note_on", "note_off")]


def metas_of(track: list[dict], meta: int) -> list[dict]:
    return [e for e in track if e["type"] == "meta" and e["meta"] == meta]
