"""
Text artifact formats: transcripts (delimited, one round per line),
key-value summaries and config files, and hex key files.

All formats start with a ``# erasure-qkd <kind> v<N>`` line.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Mapping, Optional

import numpy as np

from .protocol import NO_VALUE, Transcript

FORMAT_VERSION = 1

ERASURE_COLUMNS = (
    "round_id", "source", "alice_bit", "bob_bit", "detector", "pol_tag",
    "kept", "sampled", "clicks", "eve_note",
)
BB84_COLUMNS = (
    "round_id", "alice_basis", "alice_bit", "bob_basis", "bob_bit",
    "kept", "sampled", "clicks", "eve_basis", "eve_bit",
)

_SOURCE = ("S1", "S2")
_DETECTOR = ("D1", "D2")
_POL = ("plus45", "minus45")
_BASIS = ("rect", "diag")
_EVE_NOTE = {
    (0, 0): "no_rotation/upper", (0, 1): "no_rotation/lower",
    (1, 0): "rotation/upper", (1, 1): "rotation/lower",
}


class FormatError(ValueError):
    pass


def magic(kind: str) -> str:
    return f"# erasure-qkd {kind} v{FORMAT_VERSION}"


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


def _coded(codes: np.ndarray, names: tuple[str, ...]) -> np.ndarray:
    table = np.array(list(names) + [""], dtype=object)
    return table[np.where(codes == NO_VALUE, len(names), codes)]


def _flag(col: np.ndarray) -> np.ndarray:
    return np.where(col, "1", "0").astype(object)


def _int(col: np.ndarray) -> np.ndarray:
    return np.where(col == NO_VALUE, "", col.astype(str)).astype(object)


def render_transcript(transcript, protocol: str, header: Mapping[str, object]) -> str:
    """Transcript text: magic line, ``# key=value`` header lines, column header, rows."""
    n = len(transcript)
    if protocol == "erasure":
        notes = np.array([""] * n, dtype=object)
        has_eve = transcript.eve_basis != NO_VALUE
        for (b, p), text in _EVE_NOTE.items():
            notes[has_eve & (transcript.eve_basis == b) & (transcript.eve_port == p)] = text
        cols = [
            np.arange(n).astype(str).astype(object),
            _coded(transcript.source, _SOURCE),
            _int(transcript.alice_bit),
            _int(transcript.bob_bit),
            _coded(transcript.detector, _DETECTOR),
            _coded(transcript.pol_tag, _POL),
            _flag(transcript.kept),
            _flag(transcript.sampled),
            _int(transcript.clicks),
            notes,
        ]
        names = ERASURE_COLUMNS
    elif protocol == "bb84":
        cols = [
            np.arange(n).astype(str).astype(object),
            _coded(transcript.alice_basis, _BASIS),
            _int(transcript.alice_bit),
            _coded(transcript.bob_basis, _BASIS),
            _int(transcript.bob_bit),
            _flag(transcript.kept),
            _flag(transcript.sampled),
            _int(transcript.clicks),
            _coded(transcript.eve_basis, _BASIS),
            _int(transcript.eve_bit),
        ]
        names = BB84_COLUMNS
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    lines = [magic("transcript"), f"# protocol={protocol}"]
    lines += [f"# {k}={format_value(v)}" for k, v in header.items() if k != "protocol"]
    lines.append(",".join(names))
    lines += [",".join(row) for row in zip(*cols)]
    return "\n".join(lines) + "\n"


def _lookup(value: str, names: tuple[str, ...], lineno: int, column: str, optional: bool = False) -> int:
    if value == "" and optional:
        return NO_VALUE
    try:
        return names.index(value)
    except ValueError:
        raise FormatError(f"line {lineno}: bad {column} value {value!r}") from None


def _bit(value: str, lineno: int, column: str, optional: bool = False) -> int:
    if value == "" and optional:
        return NO_VALUE
    if value not in ("0", "1"):
        raise FormatError(f"line {lineno}: bad {column} value {value!r}")
    return int(value)


def parse_transcript(text: str):
    """Inverse of :func:`render_transcript`; returns ``(protocol, header, transcript)``."""
    from .bb84 import BB84Transcript

    lines = text.splitlines()
    if not lines or lines[0] != magic("transcript"):
        raise FormatError("line 1: not an erasure-qkd transcript (bad magic line)")
    header: dict[str, str] = {}
    lineno = 1
    while lineno < len(lines) and lines[lineno].startswith("#"):
        key, sep, value = lines[lineno][1:].strip().partition("=")
        if not sep:
            raise FormatError(f"line {lineno + 1}: malformed header line")
        header[key.strip()] = value.strip()
        lineno += 1
    protocol = header.get("protocol")
    columns = {"erasure": ERASURE_COLUMNS, "bb84": BB84_COLUMNS}.get(protocol)
    if columns is None:
        raise FormatError(f"unknown protocol {protocol!r} in transcript header")
    if lineno >= len(lines) or tuple(lines[lineno].split(",")) != columns:
        raise FormatError(f"line {lineno + 1}: expected column header {','.join(columns)}")
    rows = []
    for offset, row in enumerate(csv.reader(lines[lineno + 1 :])):
        ln = lineno + 2 + offset
        if len(row) != len(columns):
            raise FormatError(f"line {ln}: expected {len(columns)} fields, got {len(row)}")
        if row[0] != str(offset):
            raise FormatError(f"line {ln}: expected round_id {offset}, got {row[0]!r}")
        rows.append((ln, row))
    if "rounds" in header and header["rounds"] != str(len(rows)):
        raise FormatError(
            f"line {lineno + 1 + len(rows)}: transcript truncated "
            f"({len(rows)} rounds, header says {header['rounds']})"
        )

    if protocol == "erasure":
        from .adversary import parse_eve_note

        cols = {k: [] for k in ERASURE_COLUMNS[1:]}
        for ln, r in rows:
            cols["source"].append(_lookup(r[1], _SOURCE, ln, "source"))
            cols["alice_bit"].append(_bit(r[2], ln, "alice_bit"))
            cols["bob_bit"].append(_bit(r[3], ln, "bob_bit"))
            cols["detector"].append(_lookup(r[4], _DETECTOR, ln, "detector", optional=True))
            cols["pol_tag"].append(_lookup(r[5], _POL, ln, "pol_tag", optional=True))
            cols["kept"].append(_bit(r[6], ln, "kept"))
            cols["sampled"].append(_bit(r[7], ln, "sampled"))
            cols["clicks"].append(_bit(r[8], ln, "clicks"))
            try:
                cols["eve_note"].append(parse_eve_note(r[9]))
            except (KeyError, ValueError):
                raise FormatError(f"line {ln}: bad eve_note value {r[9]!r}") from None
        eve = np.array(cols.pop("eve_note"), dtype=np.int8).reshape(-1, 2)
        transcript = Transcript(
            **{k: np.array(v, dtype=np.int8) for k, v in cols.items()},
            eve_basis=eve[:, 0],
            eve_port=eve[:, 1],
        )
    else:
        cols = {k: [] for k in BB84_COLUMNS[1:]}
        for ln, r in rows:
            cols["alice_basis"].append(_lookup(r[1], _BASIS, ln, "alice_basis"))
            cols["alice_bit"].append(_bit(r[2], ln, "alice_bit"))
            cols["bob_basis"].append(_lookup(r[3], _BASIS, ln, "bob_basis"))
            cols["bob_bit"].append(_bit(r[4], ln, "bob_bit", optional=True))
            cols["kept"].append(_bit(r[5], ln, "kept"))
            cols["sampled"].append(_bit(r[6], ln, "sampled"))
            cols["clicks"].append(_bit(r[7], ln, "clicks"))
            cols["eve_basis"].append(_lookup(r[8], _BASIS, ln, "eve_basis", optional=True))
            cols["eve_bit"].append(_bit(r[9], ln, "eve_bit", optional=True))
        transcript = BB84Transcript(**{k: np.array(v, dtype=np.int8) for k, v in cols.items()})
    return protocol, header, transcript


def render_key_values(kind: str, values: Mapping[str, object]) -> str:
    lines = [magic(kind)] + [f"{k}={format_value(v)}" for k, v in values.items()]
    return "\n".join(lines) + "\n"


def parse_key_values(text: str, kind: Optional[str] = None) -> dict[str, str]:
    """Flat ``key=value`` text; ``#`` starts a comment line, blank lines are ignored."""
    lines = text.splitlines()
    if kind is not None and (not lines or lines[0] != magic(kind)):
        raise FormatError(f"line 1: not an erasure-qkd {kind} (bad magic line)")
    out: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def render_key(bits: np.ndarray) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    return f"{magic('key')}\nlength={len(bits)}\n{np.packbits(bits).tobytes().hex()}\n"


def parse_key(text: str) -> np.ndarray:
    values = parse_key_values("\n".join(text.splitlines()[:2]), kind="key")
    n = int(values["length"])
    hexdigits = text.splitlines()[2] if len(text.splitlines()) > 2 else ""
    raw = np.frombuffer(bytes.fromhex(hexdigits), dtype=np.uint8)
    if len(raw) != math.ceil(n / 8):
        raise FormatError(f"key body has {len(raw)} bytes, expected {math.ceil(n / 8)}")
    return np.unpackbits(raw)[:n]


def render_table(rows: Iterable[tuple], header: tuple) -> str:
    """Plain aligned text table (plot-ready, whitespace-delimited)."""
    rows = [tuple(format_value(c) if not isinstance(c, str) else c for c in r) for r in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    buf = io.StringIO()
    buf.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    for r in rows:
        buf.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
    return buf.getvalue()
