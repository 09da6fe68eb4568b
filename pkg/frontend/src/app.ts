import { AnnotationClient, ServiceError } from "./api.js";
import { Handlers, render } from "./render.js";
import {
    SessionState,
    buildRecord,
    canSubmit,
    loadTrace,
    newSession,
    setVerdict,
    toggleHighlight,
} from "./state.js";

/** One annotator session in one tab: fetch, render, submit, advance. */
export class App implements Handlers {
    state: SessionState;

    constructor(
        private readonly mount: HTMLElement,
        private readonly client: AnnotationClient,
        annotatorId: string,
    ) {
        this.state = newSession(annotatorId);
    }

    private update(state: SessionState): void {
        this.state = state;
        this.mount.replaceChildren(render(this.state, this));
    }

    async start(): Promise<void> {
        await this.fetchNext();
    }

    private async fetchNext(): Promise<void> {
        try {
            const trace = await this.client.nextTask(this.state.annotatorId);
            this.update(loadTrace(this.state, trace));
        } catch (error) {
            this.update({
                ...this.state,
                trace: null,
                message: error instanceof Error ? error.message : String(error),
            });
        }
    }

    onVerdict(stepIndex: number, verdict: "correct" | "incorrect"): void {
        this.update(setVerdict(this.state, stepIndex, verdict));
    }

    onWordClick(word: string): void {
        this.update(toggleHighlight(this.state, word));
    }

    onRetry(): void {
        void this.fetchNext();
    }

    async onSubmit(): Promise<void> {
        if (!canSubmit(this.state)) return; // also blocks double-submit in flight
        const record = buildRecord(this.state);
        this.update({ ...this.state, submitting: true });
        try {
            await this.client.submit(record);
        } catch (error) {
            const detail =
                error instanceof ServiceError ? error.message : "submission failed, try again";
            this.update({ ...this.state, submitting: false, message: detail });
            return;
        }
        this.update({ ...this.state, submitting: false });
        await this.fetchNext();
    }
}
