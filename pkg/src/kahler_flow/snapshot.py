"""Bit-exact flow snapshots in a self-describing text format.

Every float is stored as a C99 hexadecimal literal (``float.hex``), so
reading a snapshot back yields exactly the bits that were written. A file
holds the config echo, the clock, and the potential at the snapshot time plus
the potentials at the two preceding recording times, which the heat-identity
diagnostic needs when a run is resumed.
"""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT = "kahler-flow-state 1"
_NAME = re.compile(r"^snapshot_(\d+(?:\.\d+)?)\.state$")


@dataclass
class Snapshot:
    config_text: str
    t: float
    index: int
    steps: int
    last_dt: float
    phi: np.ndarray
    history: list[tuple[float, np.ndarray]] = field(default_factory=list)


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _hex_block(values) -> list[str]:
    return [float(v).hex() for v in values]


def dumps(snap: Snapshot) -> str:
    lines = [f"format = {FORMAT}"]
    lines.append(f"t = {float(snap.t).hex()}")
    lines.append(f"index = {snap.index}")
    lines.append(f"steps = {snap.steps}")
    lines.append(f"last_dt = {float(snap.last_dt).hex()}")
    cfg = snap.config_text.rstrip("\n").split("\n")
    lines.append(f"config_lines = {len(cfg)}")
    lines += cfg
    lines.append(f"phi = {snap.phi.size}")
    lines += _hex_block(snap.phi)
    lines.append(f"history = {len(snap.history)}")
    for t, phi in snap.history:
        lines.append(f"history_t = {float(t).hex()} {phi.size}")
        lines += _hex_block(phi)
    return "\n".join(lines) + "\n"


class SnapshotError(ValueError):
    pass


def loads(text: str) -> Snapshot:
    lines = text.split("\n")
    pos = 0

    def take(key):
        nonlocal pos
        if pos >= len(lines):
            raise SnapshotError(f"truncated snapshot, expected {key}")
        name, sep, value = lines[pos].partition(" = ")
        if name != key or not sep:
            raise SnapshotError(f"expected {key!r} on line {pos + 1}, got {lines[pos]!r}")
        pos += 1
        return value

    def take_floats(count):
        nonlocal pos
        block = lines[pos : pos + count]
        if len(block) != count:
            raise SnapshotError("truncated float block")
        pos += count
        try:
            return np.array([float.fromhex(v) for v in block])
        except ValueError as exc:
            raise SnapshotError(f"bad float literal: {exc}") from exc

    if take("format") != FORMAT:
        raise SnapshotError("unrecognised snapshot format")
    t = float.fromhex(take("t"))
    index = int(take("index"))
    steps = int(take("steps"))
    last_dt = float.fromhex(take("last_dt"))
    ncfg = int(take("config_lines"))
    config_text = "\n".join(lines[pos : pos + ncfg]) + "\n"
    pos += ncfg
    phi = take_floats(int(take("phi")))
    history = []
    for _ in range(int(take("history"))):
        ht, size = take("history_t").split()
        history.append((float.fromhex(ht), take_floats(int(size))))
    return Snapshot(config_text, t, index, steps, last_dt, phi, history)


def snapshot_name(t: float) -> str:
    return f"snapshot_{t:.6f}.state"


def write(directory, snap: Snapshot) -> Path:
    path = Path(directory) / snapshot_name(snap.t)
    atomic_write(path, dumps(snap))
    return path


def read(path) -> Snapshot:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def latest(directory) -> Path | None:
    """The snapshot with the largest time in ``directory``, if any."""
    found = []
    for p in Path(directory).iterdir():
        m = _NAME.match(p.name)
        if m:
            found.append((float(m.group(1)), p))
    return max(found)[1] if found else None
