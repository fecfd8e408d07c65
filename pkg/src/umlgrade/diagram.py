"""In-memory model of a UML class diagram: classes, associations, multiplicities."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

UNBOUNDED = None  # sentinel for an unbounded upper multiplicity


@dataclass(frozen=True)
class Multiplicity:
    """Cardinality constraint on an association end.

    ``upper`` is ``None`` when unbounded. Canonical text forms are
    ``"n"``, ``"n..m"``, ``"n..*"`` and ``"*"`` (shorthand for ``0..*``).
    """

    lower: int
    upper: Optional[int]

    def __post_init__(self) -> None:
        if self.lower < 0:
            raise ValueError(f"negative lower bound: {self.lower}")
        if self.upper is not None and self.upper < self.lower:
            raise ValueError(f"upper {self.upper} < lower {self.lower}")

    def text(self) -> str:
        if self.upper is None:
            return "*" if self.lower == 0 else f"{self.lower}..*"
        if self.lower == self.upper:
            return str(self.lower)
        return f"{self.lower}..{self.upper}"


@dataclass(frozen=True)
class ClassEntity:
    id: str
    name: str


@dataclass
class Association:
    source_id: str
    target_id: str
    name: Optional[str] = None
    source_multiplicity: Optional[Multiplicity] = None
    target_multiplicity: Optional[Multiplicity] = None
    repair_notes: list[str] = field(default_factory=list)


@dataclass
class Diagram:
    classes: list[ClassEntity] = field(default_factory=list)
    associations: list[Association] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def class_by_id(self, class_id: str) -> Optional[ClassEntity]:
        for c in self.classes:
            if c.id == class_id:
                return c
        return None


def validate(diagram: Diagram) -> list[str]:
    """Check every model invariant; returns one message per violation."""
    violations: list[str] = []
    seen_ids: set[str] = set()
    for cls in diagram.classes:
        if not cls.name.strip():
            violations.append(f"class {cls.id!r} has an empty name")
        if cls.id in seen_ids:
            violations.append(f"duplicate class id {cls.id!r}")
        seen_ids.add(cls.id)
    for assoc in diagram.associations:
        if assoc.source_id not in seen_ids:
            violations.append(
                f"association {assoc.source_id!r}->{assoc.target_id!r} has "
                f"dangling source {assoc.source_id!r}"
            )
        if assoc.target_id not in seen_ids:
            violations.append(
                f"association {assoc.source_id!r}->{assoc.target_id!r} has "
                f"dangling target {assoc.target_id!r}"
            )
    return violations


_CANONICAL_MULT = re.compile(r"^(?:\*|\d+|\d+\.\.\d+|\d+\.\.\*)$")


def is_canonical_multiplicity_text(text: str) -> bool:
    return bool(_CANONICAL_MULT.match(text))
