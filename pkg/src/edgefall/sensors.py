"""Sensor kinds and sensor subsets.

The channel layout is fixed project-wide: accelerometer x/y/z, gyroscope
x/y/z, barometer pressure, in that order. A subset keeps the layout order
of its members, so a model trained on channels [ax, ay, az, p] is portable
across tools. Subset display names sort the letters alphabetically
(A < B < G), e.g. "AB", "BG", "ABG".
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import ConfigError


class SensorKind(Enum):
    ACCELEROMETER = "A"
    GYROSCOPE = "G"
    BAROMETER = "B"

    @property
    def letter(self) -> str:
        return self.value

    @property
    def channel_count(self) -> int:
        return _CHANNEL_COUNTS[self]

    @property
    def channel_names(self) -> tuple[str, ...]:
        return _CHANNEL_NAMES[self]


_CHANNEL_COUNTS = {
    SensorKind.ACCELEROMETER: 3,
    SensorKind.GYROSCOPE: 3,
    SensorKind.BAROMETER: 1,
}

_CHANNEL_NAMES = {
    SensorKind.ACCELEROMETER: ("ax", "ay", "az"),
    SensorKind.GYROSCOPE: ("gx", "gy", "gz"),
    SensorKind.BAROMETER: ("p",),
}

# Packing order of channels in windows and model inputs.
LAYOUT_ORDER = (SensorKind.ACCELEROMETER, SensorKind.GYROSCOPE, SensorKind.BAROMETER)

FULL_CHANNEL_NAMES = tuple(
    name for kind in LAYOUT_ORDER for name in kind.channel_names
)


@dataclass(frozen=True)
class SensorSet:
    """Nonempty subset of the three sensor kinds."""

    members: frozenset

    def __post_init__(self):
        if not self.members:
            raise ConfigError("sensor set must not be empty")
        for m in self.members:
            if not isinstance(m, SensorKind):
                raise ConfigError(f"not a sensor kind: {m!r}")

    @classmethod
    def of(cls, *kinds: SensorKind) -> "SensorSet":
        return cls(frozenset(kinds))

    @classmethod
    def parse(cls, text: str) -> "SensorSet":
        """Parse names like "AB", "a,b" or "ABG" (case-insensitive)."""
        letters = [c for c in text.upper() if c.isalpha()]
        if not letters:
            raise ConfigError(f"cannot parse sensor set from {text!r}")
        kinds = []
        for c in letters:
            try:
                kinds.append(SensorKind(c))
            except ValueError:
                raise ConfigError(f"unknown sensor letter {c!r} in {text!r}") from None
        if len(set(kinds)) != len(kinds):
            raise ConfigError(f"duplicate sensor letter in {text!r}")
        return cls(frozenset(kinds))

    @classmethod
    def full(cls) -> "SensorSet":
        return cls(frozenset(LAYOUT_ORDER))

    @property
    def name(self) -> str:
        """Canonical display name, letters sorted alphabetically."""
        return "".join(sorted(k.letter for k in self.members))

    @property
    def channel_count(self) -> int:
        return sum(k.channel_count for k in self.members)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(
            name for kind in LAYOUT_ORDER if kind in self.members
            for name in kind.channel_names
        )

    def channel_indices(self) -> tuple[int, ...]:
        """Indices of this subset's channels within the full 7-channel layout."""
        idx = []
        offset = 0
        for kind in LAYOUT_ORDER:
            if kind in self.members:
                idx.extend(range(offset, offset + kind.channel_count))
            offset += kind.channel_count
        return tuple(idx)

    def issubset(self, other: "SensorSet") -> bool:
        return self.members <= other.members

    def union(self, other: "SensorSet") -> "SensorSet":
        return SensorSet(self.members | other.members)

    def __contains__(self, kind: SensorKind) -> bool:
        return kind in self.members

    def __iter__(self) -> Iterator[SensorKind]:
        return iter(k for k in LAYOUT_ORDER if k in self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __str__(self) -> str:
        return self.name


def all_sensor_sets() -> list[SensorSet]:
    """The seven valid subsets, in the row order of the ablation table."""
    return [SensorSet.parse(s) for s in ("ABG", "AG", "BG", "AB", "A", "G", "B")]


def parse_subset_list(text: str | Iterable[str]) -> list[SensorSet]:
    """Parse a comma-separated list like "A,AB,ABG" into sensor sets."""
    parts = text.split(",") if isinstance(text, str) else list(text)
    subsets = [SensorSet.parse(p) for p in parts if str(p).strip()]
    if not subsets:
        raise ConfigError(f"no sensor subsets in {text!r}")
    return subsets
