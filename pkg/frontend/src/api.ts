// Thin wrappers over the two service endpoints. No other backend surface
// exists as far as the UI is concerned.

export interface ChatRequest {
    utterance: string;
    session_id?: string;
}

export interface ChatResponse {
    response: string;
    emotion: string | null;
    model_variant: string;
    elapsed_ms: number;
    session_id?: string;
}

export interface Health {
    status: string;
    model_variant: string | null;
    checkpoint_digest: string | null;
    vocab_size: number | null;
}

export class ApiError extends Error {
    status: number;

    constructor(status: number, message: string) {
        super(message);
        this.status = status;
    }
}

async function errorMessage(resp: Response): Promise<string> {
    try {
        const body = await resp.json();
        if (body && typeof body.error === "string") return body.error;
    } catch {
        // non-JSON error body; fall through to the status line
    }
    return `service returned ${resp.status}`;
}

export async function postChat(req: ChatRequest, base = ""): Promise<ChatResponse> {
    const resp = await fetch(`${base}/api/chat`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(req),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    const body = await resp.json();
    if (typeof body.response !== "string") {
        throw new ApiError(502, "malformed chat response");
    }
    return body as ChatResponse;
}

export async function getHealth(base = ""): Promise<Health> {
    const resp = await fetch(`${base}/api/health`);
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return (await resp.json()) as Health;
}
