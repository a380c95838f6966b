import { describe, expect, it, vi } from "vitest";

import {
    EMOTION_GROUPS,
    agentEntry,
    errorEntry,
    hasRtlText,
    nextTimestamp,
    renderTranscript,
    userEntry,
} from "../src/transcript";

function container(): HTMLElement {
    const el = document.createElement("main");
    document.body.appendChild(el);
    return el;
}

describe("hasRtlText", () => {
    it("detects Arabic", () => {
        expect(hasRtlText("بإبنتي")).toBe(true);
    });

    it("detects Arabic presentation forms and Hebrew", () => {
        expect(hasRtlText("ﭐ")).toBe(true);
        expect(hasRtlText("שלום")).toBe(true);
    });

    it("stays LTR for English and digits", () => {
        expect(hasRtlText("hello there 123")).toBe(false);
        expect(hasRtlText("")).toBe(false);
    });

    it("flags mixed content", () => {
        expect(hasRtlText("said بإبنتي today")).toBe(true);
    });
});

describe("timestamps", () => {
    it("strictly increase even within one millisecond", () => {
        const a = nextTimestamp();
        const b = nextTimestamp();
        const c = nextTimestamp();
        expect(b).toBeGreaterThan(a);
        expect(c).toBeGreaterThan(b);
    });

    it("orders user/agent entry pairs", () => {
        const u = userEntry("hi");
        const a = agentEntry("hello", "joy");
        expect(a.timestamp).toBeGreaterThan(u.timestamp);
    });
});

describe("renderTranscript", () => {
    it("shows a placeholder for the empty transcript", () => {
        const el = container();
        renderTranscript(el, []);
        expect(el.querySelector(".placeholder")).not.toBeNull();
    });

    it("aligns bubbles by author", () => {
        const el = container();
        renderTranscript(el, [userEntry("hi"), agentEntry("hello", "joy")]);
        const rows = el.querySelectorAll(".entry");
        expect(rows).toHaveLength(2);
        expect(rows[0].className).toContain("user");
        expect(rows[1].className).toContain("agent");
    });

    it("renders exactly one badge per agent entry, none for user entries", () => {
        const el = container();
        renderTranscript(el, [userEntry("hi"), agentEntry("hello", "sadness")]);
        const rows = el.querySelectorAll(".entry");
        expect(rows[0].querySelectorAll(".badge")).toHaveLength(0);
        expect(rows[1].querySelectorAll(".badge")).toHaveLength(1);
        expect(rows[1].querySelector(".badge")!.className).toContain("badge-sadness");
    });

    it("has a badge class for each of the six groups", () => {
        const el = container();
        renderTranscript(el, EMOTION_GROUPS.map((g) => agentEntry(`feeling ${g}`, g)));
        const badges = [...el.querySelectorAll(".badge")];
        expect(badges.map((b) => b.textContent)).toEqual([...EMOTION_GROUPS]);
        for (const [i, g] of EMOTION_GROUPS.entries()) {
            expect(badges[i].className).toBe(`badge badge-${g}`);
        }
    });

    it("falls back to a neutral badge when the service sent no emotion", () => {
        const el = container();
        renderTranscript(el, [agentEntry("hello", null)]);
        expect(el.querySelector(".badge")!.className).toBe("badge badge-none");
    });

    it("sets the RTL direction attribute on Arabic bubbles only", () => {
        const el = container();
        renderTranscript(el, [userEntry("بإبنتي"), agentEntry("fine", "joy")]);
        const bubbles = el.querySelectorAll(".bubble");
        expect(bubbles[0].getAttribute("dir")).toBe("rtl");
        expect(bubbles[1].getAttribute("dir")).toBe("ltr");
    });

    it("keeps the newest of 100 entries last and scrolls to it", () => {
        const el = container();
        Object.defineProperty(el, "scrollHeight", { value: 4321 });
        const entries = Array.from({ length: 100 }, (_, i) => userEntry(`m${i}`));
        renderTranscript(el, entries);
        const rows = el.querySelectorAll(".entry");
        expect(rows).toHaveLength(100);
        expect(rows[99].textContent).toBe("m99");
        expect(el.scrollTop).toBe(4321);
    });

    it("wires the retry button on error entries", () => {
        const el = container();
        const retry = vi.fn();
        renderTranscript(el, [errorEntry("boom", retry)]);
        const btn = el.querySelector("button.retry") as HTMLButtonElement;
        expect(btn).not.toBeNull();
        btn.click();
        expect(retry).toHaveBeenCalledTimes(1);
        expect(el.querySelectorAll(".badge")).toHaveLength(0);
    });

    it("repaints instead of accumulating", () => {
        const el = container();
        renderTranscript(el, [userEntry("one")]);
        renderTranscript(el, [userEntry("one"), agentEntry("two", "fear")]);
        expect(el.querySelectorAll(".entry")).toHaveLength(2);
    });
});
