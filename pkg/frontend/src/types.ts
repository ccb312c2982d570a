export type Mode = "choropleth" | "flow_map" | "timeseries" | "download";

export type Direction = "inflow" | "outflow" | "in_and_out" | "intraflow";

/** min_lon, min_lat, max_lon, max_lat */
export type Bbox = [number, number, number, number];

export interface ExplorerState {
    dataset: string;
    level: string;
    start: string; // YYYY-MM-DD
    end: string;
    mode: Mode;
    direction: Direction;
    unitId: string | null;
    bbox: Bbox | null;
    minCount: number | null; // null lets the server apply its dataset default
    aggregated: boolean;
}

export interface LevelMeta {
    level: string;
    start: string | null;
    end: string | null;
}

export interface DatasetMeta {
    name: string;
    levels: LevelMeta[];
}

export interface MetaResponse {
    datasets: DatasetMeta[];
}

export type ChoroplethValues = Record<string, number>;

export interface FlowLineDatum {
    origin: string;
    origin_lat: number;
    origin_lon: number;
    destination: string;
    destination_lat: number;
    destination_lon: number;
    count: number;
}

export interface SeriesPoint {
    date: string;
    count: number;
}

export interface BoundaryFeature {
    type: "Feature";
    properties: { id: string; level: string; name?: string };
    geometry: {
        type: "Polygon" | "MultiPolygon";
        coordinates: number[][][] | number[][][][];
    };
}

export interface BoundaryCollection {
    type: "FeatureCollection";
    features: BoundaryFeature[];
}
