import type { AnnotationRecord, TracePayload } from "./types.js";

export class ServiceError extends Error {
    constructor(
        message: string,
        public readonly status: number,
    ) {
        super(message);
    }
}

async function detailOf(response: Response): Promise<string> {
    try {
        const body = await response.json();
        if (typeof body?.detail === "string") return body.detail;
    } catch {
        // fall through to the generic message
    }
    return `service returned ${response.status}`;
}

export class AnnotationClient {
    constructor(private readonly base: string = "") {}

    async nextTask(annotatorId: string): Promise<TracePayload | null> {
        const url = `${this.base}/api/next?annotator=${encodeURIComponent(annotatorId)}`;
        const response = await fetch(url);
        if (!response.ok) throw new ServiceError(await detailOf(response), response.status);
        const body = await response.json();
        return body.trace;
    }

    async submit(record: AnnotationRecord): Promise<void> {
        const response = await fetch(`${this.base}/api/annotations`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(record),
        });
        if (!response.ok) throw new ServiceError(await detailOf(response), response.status);
    }
}
