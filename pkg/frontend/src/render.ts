import {
    SessionState,
    canSubmit,
    isHighlighted,
    isStepDisabled,
    stripPunctuation,
    submitBlockedReason,
} from "./state.js";

export interface Handlers {
    onVerdict(stepIndex: number, verdict: "correct" | "incorrect"): void;
    onWordClick(word: string): void;
    onSubmit(): void;
    onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

/** Wrap every whitespace token in a clickable span so words can be highlighted. */
function renderText(state: SessionState, text: string, handlers: Handlers): HTMLElement {
    const container = el("span", "text");
    for (const piece of text.split(/(\s+)/)) {
        if (piece.length === 0) continue;
        if (/^\s+$/.test(piece)) {
            container.appendChild(document.createTextNode(piece));
            continue;
        }
        const word = el("span", "word", piece);
        if (stripPunctuation(piece).length > 0 && isHighlighted(state, piece)) {
            word.classList.add("highlight");
        }
        word.addEventListener("click", () => handlers.onWordClick(piece));
        container.appendChild(word);
    }
    return container;
}

function renderStepRow(
    state: SessionState,
    stepIndex: number,
    text: string,
    handlers: Handlers,
): HTMLElement {
    const row = el("div", "step-row");
    row.appendChild(renderText(state, text, handlers));
    const controls = el("span", "verdict-controls");
    const disabled = isStepDisabled(state, stepIndex);
    for (const verdict of ["correct", "incorrect"] as const) {
        const button = el("button", `verdict ${verdict}`, verdict);
        button.disabled = disabled;
        if (state.selections[stepIndex] === verdict) button.classList.add("selected");
        button.addEventListener("click", () => handlers.onVerdict(stepIndex, verdict));
        controls.appendChild(button);
    }
    row.appendChild(controls);
    return row;
}

export function render(state: SessionState, handlers: Handlers): HTMLElement {
    const root = el("div", "annotation-app");

    if (state.done) {
        root.appendChild(el("p", "done-message", "All traces annotated. Thank you!"));
        return root;
    }
    if (state.trace === null) {
        root.appendChild(el("p", "status-message", state.message ?? "Loading..."));
        if (state.message) {
            const retry = el("button", "retry", "Retry");
            retry.addEventListener("click", () => handlers.onRetry());
            root.appendChild(retry);
        }
        return root;
    }

    root.appendChild(el("p", "note", state.trace.note));

    const question = el("div", "question");
    question.appendChild(el("span", "label", "Question: "));
    question.appendChild(renderText(state, state.trace.question, handlers));
    root.appendChild(question);

    const target = el("div", "target");
    target.appendChild(el("span", "label", "Target answer: "));
    target.appendChild(renderText(state, state.trace.target, handlers));
    root.appendChild(target);

    const steps = el("div", "steps");
    state.trace.steps.forEach((text, i) => {
        steps.appendChild(renderStepRow(state, i, text, handlers));
    });
    root.appendChild(steps);

    const submit = el("button", "submit", state.submitting ? "Submitting..." : "Submit");
    submit.disabled = !canSubmit(state);
    submit.addEventListener("click", () => handlers.onSubmit());
    root.appendChild(submit);

    const blocked = submitBlockedReason(state);
    if (blocked) root.appendChild(el("p", "blocked-message", blocked));
    if (state.message) root.appendChild(el("p", "error-message", state.message));
    return root;
}
