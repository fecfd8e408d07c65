/**
 * In-memory stand-in for the grading review service, speaking the same JSON
 * contracts and status codes, including the 409 optimistic-concurrency path.
 * Seeded to mirror a small workspace: 4 criteria, 3 diagrams, one run.
 */

import type { FetchLike } from "../src/api";
import type {
  ComparisonReport,
  CriterionCategory,
  FlaggedCriterion,
  ReviewRequest,
  ScoreValue,
} from "../src/types";

interface Cell {
  ta: ScoreValue;
  llm: ScoreValue;
  effective: ScoreValue;
  adjusted: boolean;
  clarification: string;
}

const CRITERIA: { id: number; description: string; category: CriterionCategory }[] = [
  { id: 1, description: "Class Charging Station is present.", category: "CLASS" },
  { id: 2, description: "Class User is present.", category: "CLASS" },
  { id: 3, description: "User is associated with Charging Station.", category: "ASSOCIATION" },
  { id: 4, description: "The station end has multiplicity 1..*.", category: "MULTIPLICITY" },
];

export class FakeService {
  cells = new Map<string, Cell>();
  reviewLog: ReviewRequest[] = [];

  constructor() {
    const seed: [string, number, ScoreValue, ScoreValue][] = [
      // criterion 1: full agreement
      ["d0", 1, 1, 1], ["d1", 1, 1, 1], ["d2", 1, 1, 1],
      // criterion 2: one disagreement (2/3 accuracy)
      ["d0", 2, 1, 0.5], ["d1", 2, 0.5, 0.5], ["d2", 2, 1, 1],
      // criterion 3: two disagreements (1/3 accuracy)
      ["d0", 3, 1, 0], ["d1", 3, 0.5, 0], ["d2", 3, 0, 0],
      // criterion 4: all disagree (0/3 accuracy)
      ["d0", 4, 1, 0], ["d1", 4, 1, 0.5], ["d2", 4, 0.5, 0],
    ];
    for (const [diagram, criterion, ta, llm] of seed) {
      this.cells.set(`${diagram}:${criterion}`, {
        ta,
        llm,
        effective: llm,
        adjusted: false,
        clarification: `model note for ${diagram} #${criterion}`,
      });
    }
  }

  private criterionCells(id: number): [string, Cell][] {
    return [...this.cells.entries()]
      .filter(([key]) => key.endsWith(`:${id}`))
      .sort(([a], [b]) => a.localeCompare(b));
  }

  private accuracy(id: number): number {
    const cells = this.criterionCells(id);
    const equal = cells.filter(([, c]) => c.ta === c.effective).length;
    return equal / cells.length;
  }

  report(threshold: number): ComparisonReport {
    const all = [...this.cells.values()];
    const equal = all.filter((c) => c.ta === c.effective).length;
    const diffs = all.map((c) => c.effective - c.ta);
    const over = diffs.filter((d) => d > 0).length;
    const under = diffs.filter((d) => d < 0).length;
    const flagged = CRITERIA.map((c) => c.id)
      .filter((id) => this.accuracy(id) < threshold)
      .sort((a, b) => this.accuracy(a) - this.accuracy(b) || a - b);
    return {
      report_version: 1,
      model_name: "model-x",
      overall_accuracy: equal / all.length,
      pearson_r: null,
      mae: 0.5,
      mean_bias: diffs.reduce((a, b) => a + b, 0) / diffs.length,
      harshness_ratio: over === 0 ? null : under / over,
      per_category: {},
      per_criterion: CRITERIA.map((c) => {
        const cells = this.criterionCells(c.id).map(([, cell]) => cell);
        return {
          criterion_id: c.id,
          n: cells.length,
          accuracy: this.accuracy(c.id),
          bias:
            cells.map((x) => x.effective - x.ta).reduce((a, b) => a + b, 0) /
            cells.length,
          over_count: cells.filter((x) => x.effective > x.ta).length,
          under_count: cells.filter((x) => x.effective < x.ta).length,
          equal_count: cells.filter((x) => x.effective === x.ta).length,
        };
      }),
      flagged,
      unmatched_diagrams: [],
    };
  }

  flags(k: number, threshold: number): FlaggedCriterion[] {
    return this.report(threshold)
      .flagged.slice(0, k)
      .map((id) => {
        const meta = CRITERIA.find((c) => c.id === id)!;
        return {
          criterion_id: id,
          description: meta.description,
          category: meta.category,
          accuracy: this.accuracy(id),
          bias: 0,
          disagreements: this.criterionCells(id)
            .filter(([, c]) => c.ta !== c.effective)
            .map(([key, c]) => ({
              diagram_id: key.split(":")[0],
              ta_score: c.ta,
              llm_score: c.llm,
              effective_score: c.effective,
              adjusted: c.adjusted,
              clarification: c.clarification,
            })),
        };
      });
  }

  review(body: ReviewRequest): { status: number; body: unknown } {
    const cell = this.cells.get(`${body.diagram_id}:${body.criterion_id}`);
    if (!cell) {
      return { status: 404, body: { detail: "unknown cell" } };
    }
    if (cell.effective !== body.old_score) {
      return {
        status: 409,
        body: { detail: `score is ${cell.effective}, not ${body.old_score}` },
      };
    }
    cell.effective = body.new_score;
    cell.adjusted = true;
    this.reviewLog.push(body);
    return {
      status: 200,
      body: {
        diagram_id: body.diagram_id,
        criterion_id: body.criterion_id,
        effective_score: cell.effective,
        source: "ADJUSTED",
      },
    };
  }

  /** fetch-compatible entry point used by the API client under test. */
  fetch: FetchLike = async (input, init) => {
    const url = new URL(input, "http://fake");
    const respond = (status: number, body: unknown) => ({
      status,
      json: async () => body,
    });
    const reportMatch = url.pathname.match(/\/reports\/(.+)$/);
    if (reportMatch) {
      return respond(200, this.report(Number(url.searchParams.get("threshold") ?? 0.75)));
    }
    const flagsMatch = url.pathname.match(/\/flags\/(.+)$/);
    if (flagsMatch) {
      return respond(200, {
        flags: this.flags(
          Number(url.searchParams.get("k") ?? 10),
          Number(url.searchParams.get("threshold") ?? 0.75),
        ),
      });
    }
    const cellMatch = url.pathname.match(/\/cells\/[^/]+\/([^/]+)\/(\d+)$/);
    if (cellMatch) {
      const cell = this.cells.get(`${cellMatch[1]}:${cellMatch[2]}`);
      if (!cell) {
        return respond(404, { detail: "unknown cell" });
      }
      return respond(200, {
        diagram_id: cellMatch[1],
        criterion_id: Number(cellMatch[2]),
        ta_score: cell.ta,
        llm_score: cell.llm,
        effective_score: cell.effective,
        adjusted: cell.adjusted,
        clarification: cell.clarification,
      });
    }
    if (url.pathname.endsWith("/reviews") && init?.method === "POST") {
      const outcome = this.review(JSON.parse(init.body ?? "{}") as ReviewRequest);
      return respond(outcome.status, outcome.body);
    }
    return respond(404, { detail: `no route for ${url.pathname}` });
  };
}
