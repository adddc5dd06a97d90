"""Type patterns: a glob over the type name plus an optional subject variable."""

from __future__ import annotations

from dataclasses import dataclass
from fnmatch import fnmatchcase

from .crypto import TypeId


@dataclass(frozen=True)
class TypePattern:
    name_glob: str
    variable: str | None = None

    @classmethod
    def parse(cls, text: str) -> "TypePattern":
        t = TypeId.parse(text)
        return cls(t.name, t.subject_parameter)

    def matches(self, type_id: TypeId) -> bool:
        return fnmatchcase(type_id.name, self.name_glob)

    def __str__(self) -> str:
        return self.name_glob if self.variable is None else f"{self.name_glob}({self.variable})"


def any_match(patterns, type_id: TypeId) -> bool:
    return any(p.matches(type_id) for p in patterns)
