"""The attacker's bounded reward buffer and its two publication rules.

A ``Disk`` withholds recently generated rewards together with their origin
timestamps. Delay-mode publication pops any single stored reward whose age
is at most ``max_delay``; shift-mode publication fires only on a full disk,
drops a prefix, and releases the rest in original order, so the published
origin sequence stays strictly increasing.

Disks are immutable values; every operation returns a new instance, which
keeps step-loop snapshots and accounting exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class RewardCell:
    value: float
    origin_step: int


@dataclass(frozen=True)
class Disk:
    cells: tuple[RewardCell, ...]
    capacity: int
    max_delay: int

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.max_delay < 1:
            raise ValueError(f"max_delay must be >= 1, got {self.max_delay}")
        if len(self.cells) > self.capacity:
            raise ValueError("disk over capacity")
        origins = [c.origin_step for c in self.cells]
        if any(b <= a for a, b in zip(origins, origins[1:])):
            raise ValueError("cell origin_steps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def full(self) -> bool:
        return len(self.cells) == self.capacity


def empty_disk(capacity: int, max_delay: int) -> Disk:
    return Disk(cells=(), capacity=capacity, max_delay=max_delay)


def push(disk: Disk, cell: RewardCell, now: int) -> Disk:
    """Append the reward generated at ``now``; the caller must have made room."""
    if cell.origin_step != now:
        raise ValueError(f"pushed cell origin {cell.origin_step} != now {now}")
    if any(c.origin_step == cell.origin_step for c in disk.cells):
        raise ValueError(f"duplicate origin_step {cell.origin_step}")
    if disk.full:
        raise ValueError("disk full: publish or drop before pushing")
    return Disk(disk.cells + (cell,), disk.capacity, disk.max_delay)


def evict_expired(disk: Disk, now: int) -> tuple[Disk, list[RewardCell]]:
    """Drop every cell older than max_delay; age exactly max_delay survives."""
    kept = tuple(c for c in disk.cells if now - c.origin_step <= disk.max_delay)
    dropped = [c for c in disk.cells if now - c.origin_step > disk.max_delay]
    return Disk(kept, disk.capacity, disk.max_delay), dropped


def publish_delay(disk: Disk, index: int, now: int) -> tuple[float, Disk]:
    """Remove and return the value of cell ``index``; delay bound enforced."""
    if not disk.cells:
        raise ValueError("cannot publish from an empty disk")
    if not 0 <= index < len(disk.cells):
        raise ValueError(f"publish index {index} out of range for {len(disk.cells)} cells")
    cell = disk.cells[index]
    if now - cell.origin_step > disk.max_delay:
        raise ValueError(f"cell aged {now - cell.origin_step} exceeds max delay {disk.max_delay}")
    rest = disk.cells[:index] + disk.cells[index + 1 :]
    return cell.value, Disk(rest, disk.capacity, disk.max_delay)


def publish_shift(disk: Disk, drop_index: int, k_max: int) -> tuple[tuple[RewardCell, ...], Disk]:
    """Drop cells 0..drop_index, release the rest in order, empty the disk."""
    if k_max >= disk.capacity:
        raise ValueError(f"k_max {k_max} must be < disk capacity {disk.capacity}")
    if not disk.full:
        raise ValueError(f"shift publication needs a full disk, have {len(disk.cells)}/{disk.capacity}")
    if not 0 <= drop_index <= k_max:
        raise ValueError(f"drop_index {drop_index} outside [0, {k_max}]")
    published = disk.cells[drop_index + 1 :]
    return published, Disk((), disk.capacity, disk.max_delay)


# -- attack trace: line-delimited records for audit and stream verification --


@dataclass(frozen=True)
class StreamItem:
    value: float
    origin_step: int
    publish_step: int


class TraceWriter:
    """Appends one JSON record per event to a line-delimited log."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w")

    def step(self, now: int, episode: int, action, published: list[StreamItem], expired: int, shift_dropped: int) -> None:
        rec = {
            "type": "step",
            "t": now,
            "episode": episode,
            "action": action,
            "published": [[it.value, it.origin_step, it.publish_step] for it in published],
            "expired": expired,
            "shift_dropped": shift_dropped,
        }
        self._fh.write(json.dumps(rec) + "\n")

    def episode_end(self, episode: int, generated: int, published: int, expired: int, shift_dropped: int, residual: int) -> None:
        rec = {
            "type": "episode_end",
            "episode": episode,
            "generated": generated,
            "published": published,
            "expired": expired,
            "shift_dropped": shift_dropped,
            "residual": residual,
        }
        self._fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        self._fh.close()


def read_trace(path: str | Path):
    """Yield parsed records; raises ValueError on malformed lines."""
    path = Path(path)
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}:{lineno}: malformed trace line") from err
            if "type" not in rec:
                raise ValueError(f"{path}:{lineno}: record missing 'type'")
            yield rec
