"""Multi-indices over the alphabets S0 = {0, ..., d_V} and S1 = {1, ..., d_V}.

A multi-index is an immutable tuple of naturals.  Index ``0`` stands for
integration against time, ``r >= 1`` for the r-th component of the signal
noise.  Index sets are returned as tuples sorted by ``(length, entries)`` so
that every sum over a set runs in the same order on every run.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterator, Tuple

from .errors import DomainError

S0 = "S0"
S1 = "S1"


@dataclass(frozen=True, order=False)
class MultiIndex:
    entries: Tuple[int, ...] = ()

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if any(e < 0 for e in entries):
            raise DomainError(f"multi-index entries must be naturals, got {entries}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __repr__(self) -> str:
        if not self.entries:
            return "MultiIndex(∅)"
        return f"MultiIndex{self.entries}"

    def _key(self):
        return (len(self.entries), self.entries)

    def __lt__(self, other: "MultiIndex") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "MultiIndex") -> bool:
        return self._key() <= other._key()

    def __gt__(self, other: "MultiIndex") -> bool:
        return self._key() > other._key()

    def __ge__(self, other: "MultiIndex") -> bool:
        return self._key() >= other._key()

    @property
    def length(self) -> int:
        return len(self.entries)

    def is_empty(self) -> bool:
        return not self.entries

    def check_alphabet(self, alphabet: str, d_V: int) -> None:
        lo = _alphabet_start(alphabet)
        for e in self.entries:
            if not lo <= e <= d_V:
                raise DomainError(
                    f"entry {e} of {self!r} is outside {alphabet} with d_V={d_V}"
                )


EMPTY = MultiIndex(())


def concat(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return MultiIndex(a.entries + b.entries)


def drop_last(a: MultiIndex) -> MultiIndex:
    """Remove the final entry (``α₋``)."""
    if not a.entries:
        raise DomainError("drop_last of the empty multi-index")
    return MultiIndex(a.entries[:-1])


def drop_first(a: MultiIndex) -> MultiIndex:
    """Remove the first entry (``₋α``)."""
    if not a.entries:
        raise DomainError("drop_first of the empty multi-index")
    return MultiIndex(a.entries[1:])


def _alphabet_start(alphabet: str) -> int:
    if alphabet == S0:
        return 0
    if alphabet == S1:
        return 1
    raise DomainError(f"unknown alphabet {alphabet!r}; use 'S0' or 'S1'")


def alphabet_letters(alphabet: str, d_V: int) -> Tuple[int, ...]:
    return tuple(range(_alphabet_start(alphabet), d_V + 1))


@dataclass(frozen=True)
class IndexSet:
    alphabet: str
    d_V: int
    members: Tuple[MultiIndex, ...]

    def __post_init__(self):
        for a in self.members:
            a.check_alphabet(self.alphabet, self.d_V)
        object.__setattr__(self, "members", tuple(sorted(set(self.members))))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.members)

    def __contains__(self, a) -> bool:
        return a in self.members


def _words(letters, k):
    return [MultiIndex(w) for w in product(letters, repeat=k)]


def hierarchical_set(m: int, alphabet: str, d_V: int) -> IndexSet:
    """All multi-indices of length at most ``m`` (the empty one included)."""
    if m < 0:
        raise DomainError(f"order m must be >= 0, got {m}")
    letters = alphabet_letters(alphabet, d_V)
    members = []
    for k in range(m + 1):
        members.extend(_words(letters, k))
    return IndexSet(alphabet, d_V, tuple(members))


def remainder_set(m: int, alphabet: str, d_V: int) -> IndexSet:
    """All multi-indices of length exactly ``m + 1``."""
    if m < 0:
        raise DomainError(f"order m must be >= 0, got {m}")
    letters = alphabet_letters(alphabet, d_V)
    return IndexSet(alphabet, d_V, tuple(_words(letters, m + 1)))
