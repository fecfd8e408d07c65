import { ReviewApiClient } from "./api";
import { ReviewSession } from "./viewmodel";
import type { ComparisonReport, ScoreValue } from "./types";

function fmt(value: number | null, digits = 3): string {
  return value === null ? "undefined" : value.toFixed(digits);
}

function overviewHtml(report: ComparisonReport): string {
  return `
    <h2>Run overview — ${report.model_name}</h2>
    <dl class="stats">
      <dt>Overall accuracy</dt><dd>${fmt(report.overall_accuracy)}</dd>
      <dt>Pearson r</dt><dd>${fmt(report.pearson_r)}</dd>
      <dt>MAE</dt><dd>${fmt(report.mae)}</dd>
      <dt>Mean bias</dt><dd>${fmt(report.mean_bias)}</dd>
      <dt>Harshness ratio</dt><dd>${fmt(report.harshness_ratio)}</dd>
    </dl>`;
}

function render(session: ReviewSession, root: HTMLElement): void {
  if (session.report === null) {
    root.innerHTML = "<p>Loading…</p>";
    return;
  }
  let html = overviewHtml(session.report);
  if (session.agreementIsPerfect) {
    html += `<p class="banner">Full agreement — nothing flagged for review.</p>`;
  }
  html += `<h2>Flagged criteria (worst first)</h2>`;
  for (const row of session.discrepancyRows()) {
    html += `
      <div class="cell" data-diagram="${row.diagramId}" data-criterion="${row.criterionId}">
        <strong>#${row.criterionId} [${row.category}]</strong> ${row.description}<br>
        diagram ${row.diagramId}: TA ${row.taScore} vs model ${row.llmScore}
        (effective ${row.effectiveScore}${row.adjusted ? ", adjusted" : ""})<br>
        <em>${row.clarification ?? ""}</em>
        <button data-action="accept-ta">Set to TA score</button>
      </div>`;
  }
  if (session.stalePrompt !== null) {
    const p = session.stalePrompt;
    html += `
      <div class="stale-prompt">
        Cell ${p.diagramId}/#${p.criterionId} changed to ${p.currentScore}
        while you were editing. Re-apply ${p.attemptedScore}?
        <button data-action="confirm-stale">Confirm</button>
        <button data-action="dismiss-stale">Cancel</button>
      </div>`;
  }
  root.innerHTML = html;
}

export async function mount(root: HTMLElement): Promise<ReviewSession> {
  const params = new URLSearchParams(window.location.search);
  const api = new ReviewApiClient(
    params.get("api") ?? "",
    params.get("ws") ?? "default",
  );
  const session = new ReviewSession(
    api,
    params.get("run") ?? "run1",
    params.get("actor") ?? "ta",
  );

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const action = target.dataset.action;
    if (action === "confirm-stale") {
      void session.confirmStaleEdit("re-confirmed after stale edit").then(() =>
        render(session, root),
      );
    } else if (action === "dismiss-stale") {
      session.stalePrompt = null;
      render(session, root);
    } else if (action === "accept-ta") {
      const cell = target.closest(".cell") as HTMLElement;
      const diagramId = cell.dataset.diagram ?? "";
      const criterionId = Number(cell.dataset.criterion);
      const row = session
        .discrepancyRows()
        .find((r) => r.diagramId === diagramId && r.criterionId === criterionId);
      if (row) {
        void session
          .adjust(
            diagramId,
            criterionId,
            row.effectiveScore,
            row.taScore as ScoreValue,
            "accepted TA score",
          )
          .then(() => render(session, root));
      }
    }
  });

  await session.refresh();
  render(session, root);
  return session;
}
