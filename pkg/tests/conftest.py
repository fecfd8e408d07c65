import json
import random

import pytest

from umlgrade.rubric import (
    Category,
    GradeSheet,
    Rubric,
    SheetEntry,
    Source,
    load_rubric,
)

SCORES = (0.0, 0.5, 1.0)

CASE_TEXT = (
    "A city operates electric charging stations. Each charging station has "
    "one or more charging ports. Users rent vehicles and charge them at a "
    "port. Model the classes, associations and multiplicities."
)


def make_rubric_text(n: int = 40) -> str:
    """A complete analogous rubric: first 40% classes, then associations,
    then multiplicities."""
    n_class = max(1, int(n * 0.4))
    n_assoc = max(1, int(n * 0.35))
    lines = ["---CASE---", CASE_TEXT, "---CASE---"]
    for i in range(1, n + 1):
        if i <= n_class:
            cat, desc = "CLASS", f"The diagram contains required class #{i}."
        elif i <= n_class + n_assoc:
            cat, desc = "ASSOCIATION", f"Required association #{i} is present and named."
        else:
            cat, desc = "MULTIPLICITY", f"Multiplicity constraint #{i} is correct."
        lines.append(f"{i}|{cat}|{desc}")
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def rubric40() -> Rubric:
    return load_rubric(make_rubric_text(40))


@pytest.fixture(scope="session")
def rubric4() -> Rubric:
    return load_rubric(
        "1|CLASS|Class Charging Station is present.\n"
        "2|CLASS|Class User is present.\n"
        "3|ASSOCIATION|User is associated with Charging Station.\n"
        "4|MULTIPLICITY|The station end has multiplicity 1..*.\n"
    )


def make_diagram_json(
    classes: list[tuple[str, str]],
    edges: list[dict],
) -> str:
    return json.dumps(
        {
            "nodes": [
                {"id": cid, "type": "ClassNode", "text": name}
                for cid, name in classes
            ],
            "edges": edges,
        }
    )


def make_edge(eid, source, target, start=None, middle=None, end=None) -> dict:
    return {
        "id": eid,
        "type": "Edge",
        "source": source,
        "target": target,
        "startLabel": start,
        "middleLabel": middle,
        "endLabel": end,
    }


def make_sheet(
    diagram_id: str,
    grader_id: str,
    rubric: Rubric,
    rng: random.Random,
    source: Source = Source.TA,
) -> GradeSheet:
    entries = {}
    for c in rubric.criteria:
        clarification = f"note on {c.id}" if source is Source.LLM else None
        entries[c.id] = SheetEntry(score=rng.choice(SCORES), clarification=clarification)
    return GradeSheet(
        diagram_id=diagram_id, grader_id=grader_id, source=source, entries=entries
    )
