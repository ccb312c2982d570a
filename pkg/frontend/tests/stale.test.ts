import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";

interface Deferred {
    url: string;
    resolve: (response: Response) => void;
}

function deferringFetch(): { fetchFn: (url: string) => Promise<Response>; pending: Deferred[] } {
    const pending: Deferred[] = [];
    return {
        pending,
        fetchFn: (url) =>
            new Promise<Response>((resolve) => {
                pending.push({ url, resolve });
            }),
    };
}

function jsonResponse(body: unknown): Response {
    return new Response(JSON.stringify(body), {
        status: 200,
        headers: { "content-type": "application/json" },
    });
}

describe("stale response handling", () => {
    it("discards a response that lost the race to a newer request", async () => {
        const { fetchFn, pending } = deferringFetch();
        const client = new ApiClient("", fetchFn);

        const first = client.queryJson<object>("choropleth", "/one");
        const second = client.queryJson<object>("choropleth", "/two");
        expect(pending.map((p) => p.url)).toEqual(["/one", "/two"]);

        pending[1].resolve(jsonResponse({ winner: 2 }));
        await expect(second).resolves.toEqual({ kind: "ok", body: { winner: 2 } });

        pending[0].resolve(jsonResponse({ winner: 1 }));
        await expect(first).resolves.toEqual({ kind: "stale" });
    });

    it("tracks sequence numbers per channel", async () => {
        const { fetchFn, pending } = deferringFetch();
        const client = new ApiClient("", fetchFn);

        const choropleth = client.queryJson<object>("choropleth", "/a");
        const series = client.queryJson<object>("timeseries", "/b");

        pending[0].resolve(jsonResponse({ map: true }));
        pending[1].resolve(jsonResponse({ chart: true }));
        await expect(choropleth).resolves.toEqual({ kind: "ok", body: { map: true } });
        await expect(series).resolves.toEqual({ kind: "ok", body: { chart: true } });
    });

    it("surfaces error details from the body", async () => {
        const client = new ApiClient("", async () =>
            new Response('{"detail":"narrow the period"}', { status: 413 }),
        );
        const outcome = await client.fetchBytes("/api/v1/export?huge");
        expect(outcome).toEqual({ kind: "error", status: 413, message: "narrow the period" });
    });
});
