import { ApiClient } from "./api.js";
import { ExplorerApp } from "./app.js";

function browserSaveFile(filename: string, bytes: Uint8Array): void {
    const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "text/csv" });
    const url = URL.createObjectURL(blob);
    const anchor = document.createElement("a");
    anchor.href = url;
    anchor.download = filename;
    anchor.click();
    URL.revokeObjectURL(url);
}

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app container");

const app = new ExplorerApp({
    doc: document,
    root,
    client: new ApiClient("", (url) => fetch(url)),
    saveFile: browserSaveFile,
});
void app.init();
