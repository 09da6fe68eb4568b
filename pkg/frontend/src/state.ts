import type { AnnotationRecord, TracePayload, Verdict } from "./types.js";

/** What the annotator has clicked for one step; null = not verdicted yet. */
export type Selection = "correct" | "incorrect" | null;

export interface SessionState {
    annotatorId: string;
    trace: TracePayload | null;
    selections: Selection[];
    highlight: string | null;
    submitting: boolean;
    message: string | null;
    done: boolean;
}

export function newSession(annotatorId: string): SessionState {
    return {
        annotatorId,
        trace: null,
        selections: [],
        highlight: null,
        submitting: false,
        message: null,
        done: false,
    };
}

export function loadTrace(state: SessionState, trace: TracePayload | null): SessionState {
    if (trace === null) {
        return { ...state, trace: null, selections: [], highlight: null, done: true };
    }
    return {
        ...state,
        trace,
        selections: trace.steps.map(() => null),
        highlight: null,
        message: null,
        done: false,
    };
}

export function firstIncorrect(selections: readonly Selection[]): number {
    return selections.findIndex((s) => s === "incorrect");
}

/** Verdict controls after a selected "incorrect" are inactive. */
export function isStepDisabled(state: SessionState, stepIndex: number): boolean {
    const k = firstIncorrect(state.selections);
    return k >= 0 && stepIndex > k;
}

export function setVerdict(
    state: SessionState,
    stepIndex: number,
    verdict: "correct" | "incorrect",
): SessionState {
    if (state.trace === null || isStepDisabled(state, stepIndex)) return state;
    const selections = state.selections.slice();
    // clicking the already-selected verdict unmarks it
    selections[stepIndex] = selections[stepIndex] === verdict ? null : verdict;
    return { ...state, selections, message: null };
}

/** Submission gate: every step verdicted, or exactly one marked incorrect. */
export function canSubmit(state: SessionState): boolean {
    if (state.trace === null || state.submitting) return false;
    if (firstIncorrect(state.selections) >= 0) return true;
    return state.selections.every((s) => s !== null);
}

/** Why submission is blocked, for display; null when it is allowed. */
export function submitBlockedReason(state: SessionState): string | null {
    if (state.trace === null || canSubmit(state)) return null;
    const missing = state.selections
        .map((s, i) => (s === null ? i + 1 : 0))
        .filter((n) => n > 0);
    return `Verdict every step before submitting (missing: step ${missing.join(", step ")}).`;
}

/**
 * The record to post. Steps after the incorrect one are "skipped"; steps
 * before it default to "correct" (the annotator read past them), so the
 * record always satisfies the server's protocol check.
 */
export function buildRecord(state: SessionState): AnnotationRecord {
    if (state.trace === null) throw new Error("no trace loaded");
    if (!canSubmit(state)) throw new Error("submission gate not satisfied");
    const k = firstIncorrect(state.selections);
    const verdicts: Verdict[] = state.selections.map((selection, i) => {
        if (k < 0) return selection as Verdict;
        if (i < k) return "correct";
        if (i === k) return "incorrect";
        return "skipped";
    });
    return {
        trace_id: state.trace.id,
        annotator_id: state.annotatorId,
        verdicts,
    };
}

/** Client-side mirror of the server's record invariants. */
export function recordIsValid(verdicts: readonly Verdict[]): boolean {
    if (verdicts.length === 0) return false;
    const k = verdicts.indexOf("incorrect");
    if (k < 0) return verdicts.every((v) => v === "correct");
    return (
        verdicts.slice(0, k).every((v) => v === "correct") &&
        verdicts.slice(k + 1).every((v) => v === "skipped")
    );
}

/** Whitespace tokens with surrounding punctuation stripped for matching. */
export function tokenize(text: string): string[] {
    return text
        .split(/\s+/)
        .map(stripPunctuation)
        .filter((w) => w.length > 0);
}

export function stripPunctuation(word: string): string {
    // only sentence punctuation: bracket symbols are real tokens in some tasks
    return word.replace(/^["'.,;:!?]+|["'.,;:!?]+$/g, "");
}

export function toggleHighlight(state: SessionState, word: string): SessionState {
    const token = stripPunctuation(word);
    if (token.length === 0) return state;
    return { ...state, highlight: state.highlight === token ? null : token };
}

/** Case-sensitive: a token is highlighted only on an exact match. */
export function isHighlighted(state: SessionState, word: string): boolean {
    return state.highlight !== null && stripPunctuation(word) === state.highlight;
}
