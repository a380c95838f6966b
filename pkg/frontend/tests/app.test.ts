import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { App, init } from "../src/app";

const HEALTH_OK = {
    status: "ok",
    model_variant: "warm",
    checkpoint_digest: "cd".repeat(32),
    vocab_size: 211,
};

function page(): void {
    document.body.innerHTML = `
      <div id="status"></div>
      <main id="transcript"></main>
      <form id="composer">
        <input id="utterance" type="text">
        <button id="send" type="submit">send</button>
      </form>`;
}

type ChatHandler = (req: { utterance: string; session_id?: string }) => Response | Promise<Response>;

function stubService(onChat: ChatHandler, health: unknown = HEALTH_OK): ReturnType<typeof vi.fn> {
    const fetchMock = vi.fn(async (url: string, init?: RequestInit) => {
        if (url.endsWith("/api/health")) {
            return new Response(JSON.stringify(health), { status: 200 });
        }
        if (url.endsWith("/api/chat")) {
            return onChat(JSON.parse(init!.body as string));
        }
        return new Response(JSON.stringify({ error: "not found" }), { status: 404 });
    });
    vi.stubGlobal("fetch", fetchMock);
    return fetchMock;
}

function reply(text: string, emotion = "sadness"): Response {
    return new Response(JSON.stringify({
        response: text,
        emotion,
        model_variant: "warm",
        elapsed_ms: 3,
    }), { status: 200 });
}

async function startApp(): Promise<App> {
    const app = init(document, { healthIntervalMs: 0 });
    await app.pollHealth();
    return app;
}

function input(): HTMLInputElement {
    return document.getElementById("utterance") as HTMLInputElement;
}

function send(): HTMLButtonElement {
    return document.getElementById("send") as HTMLButtonElement;
}

beforeEach(page);

afterEach(() => {
    vi.unstubAllGlobals();
});

describe("round trip", () => {
    it("one utterance yields exactly two entries with a group badge", async () => {
        stubService(() => reply("i hear the ache", "sadness"));
        const app = await startApp();

        input().value = "my cat died";
        await app.send();

        expect(app.entries).toHaveLength(2);
        expect(app.entries[0]).toMatchObject({ author: "user", text: "my cat died" });
        expect(app.entries[1]).toMatchObject({ author: "agent", text: "i hear the ache" });

        const rows = document.querySelectorAll("#transcript .entry");
        expect(rows).toHaveLength(2);
        const badges = document.querySelectorAll("#transcript .badge");
        expect(badges).toHaveLength(1);
        expect(badges[0].className).toBe("badge badge-sadness");
        expect(input().value).toBe("");
        app.stop();
    });

    it("sends the session id with every request", async () => {
        const seen: (string | undefined)[] = [];
        stubService((req) => {
            seen.push(req.session_id);
            return reply("ok", "joy");
        });
        const app = await startApp();

        input().value = "one";
        await app.send();
        input().value = "two";
        await app.send();

        expect(seen).toHaveLength(2);
        expect(seen[0]).toMatch(/^s-/);
        expect(seen[1]).toBe(seen[0]);
        app.stop();
    });

    it("keeps the composer disabled while a request is in flight", async () => {
        let release: (r: Response) => void = () => undefined;
        stubService(() => new Promise<Response>((resolve) => { release = resolve; }));
        const app = await startApp();

        input().value = "hello";
        const pending = app.send();
        expect(input().disabled).toBe(true);
        expect(send().disabled).toBe(true);

        release(reply("done", "joy"));
        await pending;
        expect(input().disabled).toBe(false);
        app.stop();
    });
});

describe("gating", () => {
    it("blocks empty and whitespace input", async () => {
        const fetchMock = stubService(() => reply("never"));
        const app = await startApp();

        expect(send().disabled).toBe(true);
        input().value = "   ";
        input().dispatchEvent(new Event("input"));
        expect(send().disabled).toBe(true);

        await app.send();
        expect(app.entries).toHaveLength(0);
        // only the health probe hit the network
        expect(fetchMock.mock.calls.every(([url]) => String(url).endsWith("/api/health"))).toBe(true);
        app.stop();
    });

    it("keeps input disabled until the service reports ok", async () => {
        stubService(() => reply("x"), { status: "loading", model_variant: null });
        const app = await startApp();

        expect(input().disabled).toBe(true);
        input().value = "hello";
        await app.send();
        expect(app.entries).toHaveLength(0);

        stubService(() => reply("x"));
        await app.pollHealth();
        expect(input().disabled).toBe(false);
        app.stop();
    });

    it("treats an unreachable health endpoint as down", async () => {
        vi.stubGlobal("fetch", vi.fn(async () => { throw new Error("refused"); }));
        const app = await startApp();

        expect(input().disabled).toBe(true);
        expect(document.getElementById("status")!.textContent).toBe("service unreachable");
        app.stop();
    });
});

describe("failure and retry", () => {
    it("shows a retryable error entry and leaves the transcript intact", async () => {
        stubService(() => reply("earlier", "joy"));
        const app = await startApp();
        input().value = "first";
        await app.send();

        let calls = 0;
        stubService(() => {
            calls += 1;
            return new Response(JSON.stringify({ error: "model produced an empty response" }),
                { status: 500 });
        });
        input().value = "second";
        await app.send();

        expect(app.entries).toHaveLength(4);
        expect(app.entries[2]).toMatchObject({ author: "user", text: "second" });
        expect(app.entries[3]).toMatchObject({ error: true });
        expect(app.entries[3].text).toContain("empty response");
        expect(app.entries[0].text).toBe("first");
        expect(calls).toBe(1);
        expect(document.querySelector("#transcript button.retry")).not.toBeNull();
        app.stop();
    });

    it("retry replaces the error entry with the agent reply", async () => {
        stubService(() => new Response(JSON.stringify({ error: "down" }), { status: 503 }));
        const app = await startApp();
        input().value = "hello";
        await app.send();
        expect(app.entries).toHaveLength(2);
        expect(app.entries[1].error).toBe(true);

        stubService((req) => {
            expect(req.utterance).toBe("hello");
            return reply("recovered", "fear");
        });
        (document.querySelector("#transcript button.retry") as HTMLButtonElement).click();
        await vi.waitFor(() => {
            expect(app.entries).toHaveLength(2);
            expect(app.entries[1]).toMatchObject({ author: "agent", text: "recovered" });
        });
        expect(document.querySelector("#transcript .badge")!.className).toBe("badge badge-fear");
        expect(document.querySelector("#transcript button.retry")).toBeNull();
        app.stop();
    });

    it("a network throw during chat is also retryable", async () => {
        stubService(() => { throw new TypeError("NetworkError"); });
        const app = await startApp();
        input().value = "hello";
        await app.send();

        expect(app.entries).toHaveLength(2);
        expect(app.entries[1].error).toBe(true);
        expect(document.querySelector("#transcript button.retry")).not.toBeNull();
        app.stop();
    });
});
