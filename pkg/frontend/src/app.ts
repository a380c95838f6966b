// Page wiring: health-gated composer, one in-flight request, append-only
// transcript with inline retryable failures.

import { getHealth, postChat } from "./api.js";
import {
    TranscriptEntry,
    agentEntry,
    errorEntry,
    renderTranscript,
    userEntry,
} from "./transcript.js";

export interface App {
    entries: TranscriptEntry[];
    /** submits the composer text; no-op when gated */
    send: () => Promise<void>;
    /** one health probe; updates the banner and input gating */
    pollHealth: () => Promise<void>;
    stop: () => void;
}

export interface InitOptions {
    base?: string;
    /** health poll period in ms; 0 disables the timer (tests drive polls) */
    healthIntervalMs?: number;
}

export function init(doc: Document, opts: InitOptions = {}): App {
    const base = opts.base ?? "";
    const transcriptEl = doc.getElementById("transcript") as HTMLElement;
    const formEl = doc.getElementById("composer") as HTMLFormElement;
    const inputEl = doc.getElementById("utterance") as HTMLInputElement;
    const sendEl = doc.getElementById("send") as HTMLButtonElement;
    const statusEl = doc.getElementById("status") as HTMLElement;

    const entries: TranscriptEntry[] = [];
    const sessionId = `s-${Math.random().toString(36).slice(2, 10)}`;
    let healthy = false;
    let busy = false;

    function gate(): void {
        inputEl.disabled = !healthy || busy;
        sendEl.disabled = !healthy || busy || inputEl.value.trim() === "";
    }

    function render(): void {
        renderTranscript(transcriptEl, entries);
        gate();
    }

    async function pollHealth(): Promise<void> {
        try {
            const h = await getHealth(base);
            healthy = h.status === "ok";
            statusEl.textContent = healthy
                ? `model ${h.model_variant ?? "?"} ready`
                : `service ${h.status}`;
        } catch {
            healthy = false;
            statusEl.textContent = "service unreachable";
        }
        statusEl.className = healthy ? "status ok" : "status down";
        gate();
    }

    async function dispatch(text: string): Promise<void> {
        busy = true;
        render();
        try {
            const reply = await postChat({ utterance: text, session_id: sessionId }, base);
            entries.push(agentEntry(reply.response, reply.emotion));
        } catch (err) {
            const message = err instanceof Error ? err.message : "request failed";
            const failed = errorEntry(message, () => {
                const at = entries.indexOf(failed);
                if (at >= 0) entries.splice(at, 1);
                void dispatch(text);
            });
            entries.push(failed);
        }
        busy = false;
        render();
    }

    async function send(): Promise<void> {
        const text = inputEl.value.trim();
        if (text === "" || busy || !healthy) return;
        entries.push(userEntry(text));
        inputEl.value = "";
        await dispatch(text);
    }

    formEl.addEventListener("submit", (event) => {
        event.preventDefault();
        void send();
    });
    inputEl.addEventListener("input", gate);

    render();
    void pollHealth();
    const period = opts.healthIntervalMs ?? 3000;
    const timer = period > 0 ? setInterval(() => void pollHealth(), period) : null;

    return {
        entries,
        send,
        pollHealth,
        stop: () => {
            if (timer !== null) clearInterval(timer);
        },
    };
}
