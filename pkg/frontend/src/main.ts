import { AnnotationClient } from "./api.js";
import { App } from "./app.js";

function annotatorId(): string {
    const fromQuery = new URLSearchParams(window.location.search).get("annotator");
    if (fromQuery) return fromQuery;
    const entered = window.prompt("Annotator id:");
    return entered && entered.trim() ? entered.trim() : "anonymous";
}

const mount = document.getElementById("app");
if (mount) {
    const app = new App(mount, new AnnotationClient(), annotatorId());
    void app.start();
}
