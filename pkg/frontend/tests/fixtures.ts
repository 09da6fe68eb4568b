import type { TracePayload } from "../src/types.js";

export const NOTE =
    "Note: a trace can reach the correct target answer and still contain a " +
    "logical mistake in one of its steps. Judge each step on its own logic.";

export function fiveStepTrace(): TracePayload {
    return {
        id: "ws-1",
        task: "word_sorting",
        question: "Sort the following words alphabetically: List: phone credulity phone",
        target: "credulity phone phone",
        steps: [
            "Thought 1: Look at the first letter of phone and credulity.",
            "Thought 2: Compare p and c.",
            "Thought 3: So credulity comes before phone.",
            "Thought 4: The second phone ties with the first.",
            "Thought 5: The answer is credulity phone phone",
        ],
        note: NOTE,
    };
}
