export type Verdict = "correct" | "incorrect" | "skipped";

/** Trace payload as served by GET /api/next and GET /api/trace/{id}. */
export interface TracePayload {
    id: string;
    task: string;
    question: string;
    target: string;
    steps: string[];
    note: string;
}

/** Body for POST /api/annotations. */
export interface AnnotationRecord {
    trace_id: string;
    annotator_id: string;
    verdicts: Verdict[];
}
