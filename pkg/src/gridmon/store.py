"""Embedded per-table stores backing the queryable producer kinds.

Deliberately minimal: append, scan, delete-where, replace-by-key. The
owning engine serializes access; these classes do no locking themselves.
"""

from __future__ import annotations

from typing import Callable, Iterable

from gridmon.core import DefiningKey, Tuple, defining_key
from gridmon.relq import TableDef


class HistoryStore:
    """Full history of accepted tuples, in publication order."""

    def __init__(self, table: TableDef):
        self.table = table
        self._rows: list[Tuple] = []

    def append(self, tuples: Iterable[Tuple]) -> None:
        self._rows.extend(tuples)

    def scan(self) -> list[Tuple]:
        return list(self._rows)

    def delete_where(self, matches: Callable[[Tuple], bool]) -> int:
        kept = [t for t in self._rows if not matches(t)]
        deleted = len(self._rows) - len(kept)
        self._rows = kept
        return deleted

    def __len__(self) -> int:
        return len(self._rows)


class LatestStore:
    """One tuple per defining key, replaced when a newer-or-equal stamp arrives."""

    def __init__(self, table: TableDef):
        self.table = table
        self._current: dict[DefiningKey, Tuple] = {}

    def replace(self, tuples: Iterable[Tuple]) -> int:
        """Apply the replacement rule; returns how many tuples took effect."""
        applied = 0
        for t in tuples:
            key = defining_key(t, self.table)
            current = self._current.get(key)
            if current is None or t.timestamp >= current.timestamp:
                self._current[key] = t
                applied += 1
        return applied

    def scan(self) -> list[Tuple]:
        return list(self._current.values())

    def delete_where(self, matches: Callable[[Tuple], bool]) -> int:
        doomed = [k for k, t in self._current.items() if matches(t)]
        for k in doomed:
            del self._current[k]
        return len(doomed)

    def __len__(self) -> int:
        return len(self._current)
