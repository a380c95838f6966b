// Transcript model and DOM rendering. Entries are append-only and ordered
// by timestamp; render is a full repaint of the container.

export type Author = "user" | "agent";

export interface TranscriptEntry {
    author: Author;
    text: string;
    /** emotion group badge; agent entries only */
    emotion?: string | null;
    /** marks an inline failure entry */
    error?: boolean;
    /** re-attempts the failed turn; error entries only */
    retry?: () => void;
    timestamp: number;
}

export const EMOTION_GROUPS = ["joy", "love", "surprise", "sadness", "anger", "fear"] as const;

let lastStamp = 0;

/** Strictly increasing even when two entries land in the same millisecond. */
export function nextTimestamp(): number {
    lastStamp = Math.max(Date.now(), lastStamp + 1);
    return lastStamp;
}

export function userEntry(text: string): TranscriptEntry {
    return { author: "user", text, timestamp: nextTimestamp() };
}

export function agentEntry(text: string, emotion: string | null): TranscriptEntry {
    return { author: "agent", text, emotion, timestamp: nextTimestamp() };
}

export function errorEntry(text: string, retry: () => void): TranscriptEntry {
    return { author: "agent", text, error: true, retry, timestamp: nextTimestamp() };
}

// Arabic (incl. presentation forms) and Hebrew blocks.
const RTL_CHARS = /[֐-׿؀-ۿݐ-ݿࢠ-ࣿﭐ-﷿ﹰ-﻿]/;

export function hasRtlText(text: string): boolean {
    return RTL_CHARS.test(text);
}

function badgeFor(emotion: string | null | undefined): HTMLSpanElement {
    const span = document.createElement("span");
    const known = emotion && (EMOTION_GROUPS as readonly string[]).includes(emotion);
    span.className = known ? `badge badge-${emotion}` : "badge badge-none";
    span.textContent = known ? (emotion as string) : "?";
    return span;
}

export function renderTranscript(container: HTMLElement, entries: readonly TranscriptEntry[]): void {
    container.textContent = "";
    if (entries.length === 0) {
        const empty = document.createElement("div");
        empty.className = "placeholder";
        empty.textContent = "Say something to start the conversation.";
        container.appendChild(empty);
        return;
    }
    for (const entry of entries) {
        const row = document.createElement("div");
        row.className = `entry ${entry.author}${entry.error ? " error" : ""}`;

        const bubble = document.createElement("div");
        bubble.className = "bubble";
        bubble.setAttribute("dir", hasRtlText(entry.text) ? "rtl" : "ltr");
        bubble.textContent = entry.text;
        row.appendChild(bubble);

        if (entry.author === "agent" && !entry.error) {
            bubble.appendChild(badgeFor(entry.emotion));
        }
        if (entry.error && entry.retry) {
            const btn = document.createElement("button");
            btn.type = "button";
            btn.className = "retry";
            btn.textContent = "retry";
            btn.addEventListener("click", entry.retry);
            bubble.appendChild(btn);
        }
        container.appendChild(row);
    }
    // newest entry visible without manual scrolling
    container.scrollTop = container.scrollHeight;
}
