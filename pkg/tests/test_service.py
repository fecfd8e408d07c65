import random

import pytest
from fastapi.testclient import TestClient

from umlgrade.grader import GradingRun, serialize_sheet_as_response
from umlgrade.rubric import Source, dump_grade_sheets, load_grade_sheets
from umlgrade.service import (
    Conflict,
    NotFound,
    ReviewAction,
    StaleAction,
    Workspace,
    apply_review_log,
    create_app,
)

from conftest import make_diagram_json, make_edge, make_rubric_text, make_sheet

RUBRIC_TEXT = make_rubric_text(4)

DIAGRAM_JSON = make_diagram_json(
    [("n1", "Charging Station"), ("n2", "User")],
    [make_edge("e1", "n2", "n1", start="1", middle="uses", end="1..*")],
)


def seed_workspace(root, n_diagrams=3, seed=0, agree=False):
    ws = Workspace(root)
    rubric = ws.put_rubric(RUBRIC_TEXT)
    rng = random.Random(seed)
    ta = []
    llm = []
    for i in range(n_diagrams):
        ws.put_diagram(DIAGRAM_JSON, diagram_id=f"d{i}")
        ta_sheet = make_sheet(f"d{i}", "ta1", rubric, rng)
        ta.append(ta_sheet)
        if agree:
            llm_sheet = make_sheet(f"d{i}", "model-x", rubric, rng, Source.LLM)
            for cid in llm_sheet.entries:
                llm_sheet.entries[cid] = llm_sheet.entries[cid].__class__(
                    score=ta_sheet.entries[cid].score, clarification="same"
                )
        else:
            llm_sheet = make_sheet(f"d{i}", "model-x", rubric, rng, Source.LLM)
        llm.append(llm_sheet)
    ws.put_sheets(dump_grade_sheets(ta))
    ws.put_run(GradingRun("run1", "model-x", "r", sheets=llm))
    return ws, rubric, ta, llm


def test_durability_across_reopen(tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "w")
    reopened = Workspace(tmp_path / "w")
    assert reopened.get_diagram("d0") == ws.get_diagram("d0")
    assert reopened.get_ta_sheets()[0].entries == ta[0].entries
    run, status = reopened.get_run("run1")
    assert status == "done"
    assert run.sheets[0].entries == llm[0].entries


def test_get_unknown_run_and_report(tmp_path):
    ws = Workspace(tmp_path / "w")
    with pytest.raises(NotFound):
        ws.get_run("nope")
    with pytest.raises(NotFound):
        ws.rebuild_report("nope")


def test_duplicate_run_id_conflicts(tmp_path):
    ws, *_ = seed_workspace(tmp_path / "w")
    with pytest.raises(Conflict):
        ws.put_run(GradingRun("run1", "model-x", "r"))


def test_apply_review_updates_effective_view(tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "w")
    original = llm[0].entries[1].score
    new = 0.5 if original != 0.5 else 1.0
    sheet = ws.apply_review(ReviewAction(
        actor="ta1", run_id="run1", diagram_id="d0", criterion_id=1,
        old_score=original, new_score=new, rationale="LLM missed the class",
    ))
    assert sheet.entries[1].score == new
    assert sheet.source is Source.ADJUSTED
    assert len(ws.review_log()) == 1
    # original sheets untouched
    run, _ = ws.get_run("run1")
    assert run.sheets[0].entries[1].score == original


def test_replayed_action_is_stale(tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "w")
    original = llm[0].entries[1].score
    new = 0.5 if original != 0.5 else 1.0
    action = ReviewAction(
        actor="ta1", run_id="run1", diagram_id="d0", criterion_id=1,
        old_score=original, new_score=new, rationale="fix",
    )
    ws.apply_review(action)
    with pytest.raises(StaleAction):
        ws.apply_review(action)


def test_review_on_unknown_cell(tmp_path):
    ws, *_ = seed_workspace(tmp_path / "w")
    with pytest.raises(NotFound):
        ws.apply_review(ReviewAction("ta1", "run1", "dX", 1, 0, 1, "x"))
    with pytest.raises(NotFound):
        ws.apply_review(ReviewAction("ta1", "run1", "d0", 99, 0, 1, "x"))


def test_adjustment_flips_report_cell(tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "w", n_diagrams=2, seed=3)
    # find a disagreeing cell and align it with the TA score
    target = None
    for sheet in llm:
        ta_sheet = next(t for t in ta if t.diagram_id == sheet.diagram_id)
        for cid, e in sheet.entries.items():
            if e.score != ta_sheet.entries[cid].score:
                target = (sheet.diagram_id, cid, e.score, ta_sheet.entries[cid].score)
                break
        if target:
            break
    assert target is not None
    before = ws.rebuild_report("run1")
    diagram_id, cid, old, ta_score = target
    ws.apply_review(ReviewAction("ta1", "run1", diagram_id, cid, old, ta_score, "agree"))
    after = ws.rebuild_report("run1")
    n = sum(s.n for s in before.per_criterion)
    assert after.overall_accuracy == pytest.approx(
        before.overall_accuracy + 1 / n
    )


def test_replay_reproduces_effective_state(tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "w", n_diagrams=4, seed=7)
    rng = random.Random(21)
    stale_rejections = 0
    for _ in range(200):
        diagram_id = f"d{rng.randrange(4)}"
        cid = rng.randint(1, 4)
        effective = ws.effective_llm_sheets("run1")
        current = next(
            s for s in effective if s.diagram_id == diagram_id
        ).entries[cid].score
        claimed = rng.choice([current, rng.choice((0.0, 0.5, 1.0))])
        new = rng.choice([s for s in (0.0, 0.5, 1.0) if s != claimed])
        action = ReviewAction("ta1", "run1", diagram_id, cid, claimed, new, "r")
        if claimed == current:
            ws.apply_review(action)
        else:
            with pytest.raises(StaleAction):
                ws.apply_review(action)
            stale_rejections += 1
    assert stale_rejections > 0
    run, _ = ws.get_run("run1")
    replayed = apply_review_log(run.sheets, ws.review_log(), "run1")
    effective = ws.effective_llm_sheets("run1")
    assert [(s.diagram_id, s.entries, s.source) for s in replayed] == [
        (s.diagram_id, s.entries, s.source) for s in effective
    ]


# --- REST API ------------------------------------------------------------

@pytest.fixture
def client(tmp_path):
    def echo_backend_factory(cfg):
        # echoes the stored TA sheet for whichever diagram is being graded
        def call(system, user):
            ws = Workspace(tmp_path / "svc" / "w1")
            ta = ws.get_ta_sheets()
            # identify the diagram by its rendered text in the prompt
            for diagram_id in ws.list_diagram_ids():
                from umlgrade.render import render_diagram
                desc = render_diagram(ws.get_diagram(diagram_id).diagram)
                if desc.text in user:
                    sheet = next(s for s in ta if s.diagram_id == diagram_id)
                    return serialize_sheet_as_response(sheet)
            raise AssertionError("prompt did not match any stored diagram")
        return call

    app = create_app(tmp_path / "svc", backend_factory=echo_backend_factory)
    return TestClient(app)


def test_api_end_to_end(client):
    assert client.post("/workspaces/w1/rubric", content=RUBRIC_TEXT).status_code == 200

    r = client.post("/workspaces/w1/diagrams?diagram_id=d0", content=DIAGRAM_JSON)
    assert r.status_code == 200
    assert r.json()["diagram_id"] == "d0"

    rubric_criteria = 4
    rng = random.Random(0)
    from umlgrade.rubric import load_rubric
    rubric = load_rubric(RUBRIC_TEXT)
    ta = [make_sheet("d0", "ta1", rubric, rng)]
    r = client.post("/workspaces/w1/sheets", content=dump_grade_sheets(ta))
    assert r.status_code == 200 and r.json()["sheets"] == 1

    r = client.post(
        "/workspaces/w1/runs",
        json={"model_name": "echo", "run_id": "runA", "diagram_ids": ["d0"]},
    )
    assert r.status_code == 200

    import time
    for _ in range(100):
        status = client.get("/workspaces/w1/runs/runA").json()
        if status["status"] != "running":
            break
        time.sleep(0.05)
    assert status["status"] == "done"
    assert status["sheet_count"] == 1

    report = client.get("/workspaces/w1/reports/runA").json()
    assert report["overall_accuracy"] == 1.0
    assert report["mae"] == 0
    assert report["flagged"] == []

    flags = client.get("/workspaces/w1/flags/runA?k=2").json()["flags"]
    assert len(flags) == 2  # k lowest-accuracy criteria even if not below threshold
    assert all(f["disagreements"] == [] for f in flags)


def test_api_error_codes(client):
    assert client.get("/workspaces/w1/reports/ghost").status_code == 404
    assert client.post("/workspaces/w1/diagrams", content="{").status_code == 422
    client.post("/workspaces/w1/rubric", content=RUBRIC_TEXT)
    assert client.post("/workspaces/w1/rubric", content="junk").status_code == 422


def test_api_cell_detail(client, tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "svc" / "w1")
    r = client.get("/workspaces/w1/cells/run1/d0/1")
    assert r.status_code == 200
    doc = r.json()
    assert doc["llm_score"] == llm[0].entries[1].score
    assert doc["effective_score"] == llm[0].entries[1].score
    assert doc["ta_score"] == ta[0].entries[1].score
    assert doc["adjusted"] is False
    assert client.get("/workspaces/w1/cells/run1/d0/99").status_code == 404


def test_api_review_conflict(client, tmp_path):
    ws, rubric, ta, llm = seed_workspace(tmp_path / "svc" / "w1")
    original = llm[0].entries[2].score
    new = 1.0 if original != 1.0 else 0.0
    body = {
        "actor": "ta1", "run_id": "run1", "diagram_id": "d0",
        "criterion_id": 2, "old_score": original, "new_score": new,
        "rationale": "clarification convinced me",
    }
    r = client.post("/workspaces/w1/reviews", json=body)
    assert r.status_code == 200
    assert r.json()["effective_score"] == new
    # same precondition again: stale
    r = client.post("/workspaces/w1/reviews", json=body)
    assert r.status_code == 409
