export type FetchLike = (url: string) => Promise<Response>;

export type QueryOutcome<T> =
    | { kind: "ok"; body: T }
    | { kind: "stale" }
    | { kind: "error"; status: number; message: string };

async function errorMessage(response: Response): Promise<string> {
    try {
        const body = (await response.json()) as { detail?: string };
        if (body && typeof body.detail === "string") return body.detail;
    } catch {
        // non-JSON error body; fall through
    }
    return `request failed with status ${response.status}`;
}

/**
 * Thin client over the /api/v1/* endpoints.  Each channel (one per view
 * mode) carries a request sequence number; a response that comes back after
 * a newer request was issued on the same channel is reported as stale and
 * never rendered.
 */
export class ApiClient {
    private sequence = new Map<string, number>();

    constructor(
        private readonly baseUrl: string,
        private readonly fetchFn: FetchLike,
    ) {}

    private nextSeq(channel: string): number {
        const n = (this.sequence.get(channel) ?? 0) + 1;
        this.sequence.set(channel, n);
        return n;
    }

    private isStale(channel: string, n: number): boolean {
        return this.sequence.get(channel) !== n;
    }

    async queryJson<T>(channel: string, url: string): Promise<QueryOutcome<T>> {
        const seq = this.nextSeq(channel);
        let response: Response;
        try {
            response = await this.fetchFn(this.baseUrl + url);
        } catch (err) {
            if (this.isStale(channel, seq)) return { kind: "stale" };
            return { kind: "error", status: 0, message: String(err) };
        }
        if (this.isStale(channel, seq)) return { kind: "stale" };
        if (!response.ok) {
            return { kind: "error", status: response.status, message: await errorMessage(response) };
        }
        const body = (await response.json()) as T;
        if (this.isStale(channel, seq)) return { kind: "stale" };
        return { kind: "ok", body };
    }

    async fetchBytes(url: string): Promise<QueryOutcome<Uint8Array>> {
        let response: Response;
        try {
            response = await this.fetchFn(this.baseUrl + url);
        } catch (err) {
            return { kind: "error", status: 0, message: String(err) };
        }
        if (!response.ok) {
            return { kind: "error", status: response.status, message: await errorMessage(response) };
        }
        return { kind: "ok", body: new Uint8Array(await response.arrayBuffer()) };
    }
}
