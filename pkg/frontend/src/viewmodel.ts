import { ReviewApiClient, StaleEditError } from "./api";
import type {
  ComparisonReport,
  CriterionCategory,
  FlaggedCriterion,
  ReviewResponse,
  ScoreValue,
} from "./types";

export interface DiscrepancyRow {
  diagramId: string;
  criterionId: number;
  description: string;
  category: CriterionCategory;
  taScore: ScoreValue;
  llmScore: ScoreValue | null;
  effectiveScore: ScoreValue;
  adjusted: boolean;
  clarification: string | null;
}

export interface StalePrompt {
  diagramId: string;
  criterionId: number;
  /** score the cell actually holds now, reloaded from the service */
  currentScore: ScoreValue;
  attemptedScore: ScoreValue;
  message: string;
}

export type AdjustOutcome =
  | { kind: "applied"; response: ReviewResponse }
  | { kind: "stale"; prompt: StalePrompt };

/**
 * State for one review session over a grading run. All displayed numbers are
 * projections of service responses; refresh() reproduces identical state for
 * identical workspace state.
 */
export class ReviewSession {
  report: ComparisonReport | null = null;
  flags: FlaggedCriterion[] = [];
  stalePrompt: StalePrompt | null = null;
  private categoryFilter: CriterionCategory | null = null;

  constructor(
    private readonly api: ReviewApiClient,
    readonly runId: string,
    readonly actor: string,
    private readonly flagCount = 10,
    private readonly threshold = 0.75,
  ) {}

  async refresh(): Promise<void> {
    this.report = await this.api.getReport(this.runId, this.threshold);
    const response = await this.api.getFlags(this.runId, this.flagCount, this.threshold);
    this.flags = response.flags; // service order is authoritative (worst first)
  }

  get agreementIsPerfect(): boolean {
    return this.report !== null && this.report.flagged.length === 0;
  }

  setCategoryFilter(category: CriterionCategory | null): void {
    this.categoryFilter = category;
  }

  /** Flagged criteria in service order, optionally narrowed to one category. */
  visibleFlags(): FlaggedCriterion[] {
    if (this.categoryFilter === null) {
      return this.flags;
    }
    return this.flags.filter((f) => f.category === this.categoryFilter);
  }

  /** Disagreement cells of the visible flags, flattened worst-criterion-first. */
  discrepancyRows(): DiscrepancyRow[] {
    const rows: DiscrepancyRow[] = [];
    for (const flag of this.visibleFlags()) {
      for (const cell of flag.disagreements) {
        rows.push({
          diagramId: cell.diagram_id,
          criterionId: flag.criterion_id,
          description: flag.description,
          category: flag.category,
          taScore: cell.ta_score,
          llmScore: cell.llm_score,
          effectiveScore: cell.effective_score,
          adjusted: cell.adjusted,
          clarification: cell.clarification,
        });
      }
    }
    return rows;
  }

  /**
   * Adjust one cell. On a 409 the cell is reloaded and a re-confirmation
   * prompt is surfaced instead of mutating anything client-side.
   */
  async adjust(
    diagramId: string,
    criterionId: number,
    oldScore: ScoreValue,
    newScore: ScoreValue,
    rationale: string,
  ): Promise<AdjustOutcome> {
    try {
      const response = await this.api.postReview({
        actor: this.actor,
        run_id: this.runId,
        diagram_id: diagramId,
        criterion_id: criterionId,
        old_score: oldScore,
        new_score: newScore,
        rationale,
      });
      this.stalePrompt = null;
      await this.refresh();
      return { kind: "applied", response };
    } catch (error) {
      if (error instanceof StaleEditError) {
        await this.refresh();
        const cell = await this.api.getCell(this.runId, diagramId, criterionId);
        this.stalePrompt = {
          diagramId,
          criterionId,
          currentScore: cell.effective_score,
          attemptedScore: newScore,
          message: error.detail,
        };
        return { kind: "stale", prompt: this.stalePrompt };
      }
      throw error;
    }
  }

  /** Re-confirm a stale edit against the freshly reloaded score. */
  async confirmStaleEdit(rationale: string): Promise<AdjustOutcome> {
    if (this.stalePrompt === null) {
      throw new Error("no stale edit pending");
    }
    const { diagramId, criterionId, currentScore, attemptedScore } = this.stalePrompt;
    return this.adjust(diagramId, criterionId, currentScore, attemptedScore, rationale);
  }

}
