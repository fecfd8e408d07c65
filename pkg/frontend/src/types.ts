/** JSON shapes returned by the grading review service. */

export type ScoreValue = 0 | 0.5 | 1;

export type CriterionCategory = "CLASS" | "ASSOCIATION" | "MULTIPLICITY";

export interface CriterionStats {
  criterion_id: number;
  n: number;
  accuracy: number;
  bias: number;
  over_count: number;
  under_count: number;
  equal_count: number;
}

export interface ComparisonReport {
  report_version: number;
  model_name: string;
  overall_accuracy: number;
  pearson_r: number | null;
  mae: number;
  mean_bias: number;
  harshness_ratio: number | null;
  per_category: Partial<Record<CriterionCategory, number>>;
  per_criterion: CriterionStats[];
  flagged: number[];
  unmatched_diagrams: string[];
}

export interface DisagreementCell {
  diagram_id: string;
  ta_score: ScoreValue;
  llm_score: ScoreValue | null;
  effective_score: ScoreValue;
  adjusted: boolean;
  clarification: string | null;
}

export interface FlaggedCriterion {
  criterion_id: number;
  description: string;
  category: CriterionCategory;
  accuracy: number;
  bias: number;
  disagreements: DisagreementCell[];
}

export interface FlagsResponse {
  flags: FlaggedCriterion[];
}

export interface DiagramView {
  diagram_id: string;
  text: string;
  class_count: number;
  association_count: number;
  warnings: string[];
  repaired_count: number;
}

export interface CellDetail {
  diagram_id: string;
  criterion_id: number;
  ta_score: ScoreValue | null;
  llm_score: ScoreValue;
  effective_score: ScoreValue;
  adjusted: boolean;
  clarification: string | null;
}

export interface ReviewRequest {
  actor: string;
  run_id: string;
  diagram_id: string;
  criterion_id: number;
  old_score: ScoreValue;
  new_score: ScoreValue;
  rationale: string;
}

export interface ReviewResponse {
  diagram_id: string;
  criterion_id: number;
  effective_score: ScoreValue;
  source: string;
}
