import type { ExplorerState, Mode } from "./types.js";

export function defaultState(): ExplorerState {
    return {
        dataset: "",
        level: "",
        start: "",
        end: "",
        mode: "choropleth",
        direction: "inflow",
        unitId: null,
        bbox: null,
        minCount: null,
        aggregated: false,
    };
}

export interface QueryRequest {
    path: string;
    query: string;
}

/**
 * The query a state calls for, or null when the mode's requirements are not
 * met yet (choropleth/timeseries need a selected unit; choropleth and the
 * flow map have no intraflow direction).  Pure: the same state always maps
 * to the same URL, with parameters in a fixed order.
 */
export function requestForState(state: ExplorerState): QueryRequest | null {
    if (!state.dataset || !state.level || !state.start || !state.end) return null;
    const params = new URLSearchParams();
    params.set("dataset", state.dataset);
    params.set("level", state.level);

    switch (state.mode) {
        case "choropleth": {
            if (!state.unitId || state.direction === "intraflow") return null;
            params.set("unit", state.unitId);
            params.set("start", state.start);
            params.set("end", state.end);
            params.set("direction", state.direction);
            return { path: "/api/v1/choropleth", query: params.toString() };
        }
        case "timeseries": {
            if (!state.unitId) return null;
            params.set("unit", state.unitId);
            params.set("start", state.start);
            params.set("end", state.end);
            params.set("direction", state.direction);
            return { path: "/api/v1/timeseries", query: params.toString() };
        }
        case "flow_map": {
            if (state.direction === "intraflow") return null;
            params.set("start", state.start);
            params.set("end", state.end);
            params.set("direction", state.direction);
            if (state.bbox !== null) params.set("bbox", state.bbox.join(","));
            if (state.minCount !== null) params.set("min_count", String(state.minCount));
            return { path: "/api/v1/flows", query: params.toString() };
        }
        case "download": {
            params.set("start", state.start);
            params.set("end", state.end);
            if (state.bbox !== null) params.set("bbox", state.bbox.join(","));
            if (state.aggregated) params.set("aggregated", "true");
            return { path: "/api/v1/export", query: params.toString() };
        }
    }
}

export function requestUrl(state: ExplorerState): string | null {
    const request = requestForState(state);
    return request === null ? null : `${request.path}?${request.query}`;
}

export function hintForState(state: ExplorerState): string | null {
    if (!state.dataset || !state.level) return "pick a dataset and level";
    if ((state.mode === "choropleth" || state.mode === "timeseries") && !state.unitId) {
        return "click a unit on the map";
    }
    if (state.mode !== "timeseries" && state.mode !== "download" && state.direction === "intraflow") {
        return "intraflow applies to the time-series view only";
    }
    return null;
}

export const MODES: Mode[] = ["choropleth", "flow_map", "timeseries", "download"];

export function directionsFor(mode: Mode): string[] {
    return mode === "timeseries"
        ? ["inflow", "outflow", "in_and_out", "intraflow"]
        : ["inflow", "outflow", "in_and_out"];
}
