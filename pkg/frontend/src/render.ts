import { classIndex } from "./classing.js";
import type {
    Bbox,
    BoundaryFeature,
    ChoroplethValues,
    FlowLineDatum,
    SeriesPoint,
} from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Projection {
    x(lon: number): number;
    y(lat: number): number;
    lon(x: number): number;
    lat(y: number): number;
    width: number;
    height: number;
}

export function geoBounds(features: BoundaryFeature[]): Bbox {
    let minLon = Infinity, minLat = Infinity, maxLon = -Infinity, maxLat = -Infinity;
    for (const feature of features) {
        for (const ring of rings(feature)) {
            for (const [lon, lat] of ring) {
                if (lon < minLon) minLon = lon;
                if (lon > maxLon) maxLon = lon;
                if (lat < minLat) minLat = lat;
                if (lat > maxLat) maxLat = lat;
            }
        }
    }
    if (!Number.isFinite(minLon)) return [-180, -90, 180, 90];
    return [minLon, minLat, maxLon, maxLat];
}

/** Equirectangular fit of a lon/lat box into a pixel box (y grows downward). */
export function projectionFor(bounds: Bbox, width: number, height: number): Projection {
    const [minLon, minLat, maxLon, maxLat] = bounds;
    const lonSpan = maxLon - minLon || 1;
    const latSpan = maxLat - minLat || 1;
    return {
        width,
        height,
        x: (lon) => ((lon - minLon) / lonSpan) * width,
        y: (lat) => ((maxLat - lat) / latSpan) * height,
        lon: (x) => minLon + (x / width) * lonSpan,
        lat: (y) => maxLat - (y / height) * latSpan,
    };
}

function rings(feature: BoundaryFeature): number[][][] {
    const geometry = feature.geometry;
    if (geometry.type === "Polygon") {
        return geometry.coordinates as number[][][];
    }
    const multi = geometry.coordinates as number[][][][];
    return multi.flat();
}

function clear(element: Element): void {
    while (element.firstChild) element.removeChild(element.firstChild);
}

export interface UnitLayerOptions {
    fillClass?: (unitId: string) => string | null;
    selectedUnit?: string | null;
    onUnitClick?: (unitId: string) => void;
    onBackgroundClick?: () => void;
}

/** Draw unit polygons; returns the projection used so overlays can reuse it. */
export function renderUnitLayer(
    doc: Document,
    svg: SVGElement,
    features: BoundaryFeature[],
    options: UnitLayerOptions = {},
): Projection {
    clear(svg);
    const width = 640, height = 400;
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    const projection = projectionFor(geoBounds(features), width, height);

    const background = doc.createElementNS(SVG_NS, "rect");
    background.setAttribute("class", "map-background");
    background.setAttribute("width", String(width));
    background.setAttribute("height", String(height));
    if (options.onBackgroundClick) {
        background.addEventListener("click", () => options.onBackgroundClick!());
    }
    svg.appendChild(background);

    for (const feature of features) {
        const unitId = feature.properties.id;
        const group = doc.createElementNS(SVG_NS, "g");
        group.setAttribute("data-unit-id", unitId);
        const fill = options.fillClass?.(unitId) ?? null;
        const selected = options.selectedUnit === unitId;
        group.setAttribute(
            "class",
            ["unit", fill ?? "", selected ? "selected" : ""].filter(Boolean).join(" "),
        );
        for (const ring of rings(feature)) {
            const polygon = doc.createElementNS(SVG_NS, "polygon");
            polygon.setAttribute(
                "points",
                ring.map(([lon, lat]) => `${projection.x(lon)},${projection.y(lat)}`).join(" "),
            );
            group.appendChild(polygon);
        }
        const title = doc.createElementNS(SVG_NS, "title");
        title.textContent = feature.properties.name ?? unitId;
        group.appendChild(title);
        if (options.onUnitClick) {
            group.addEventListener("click", (event) => {
                event.stopPropagation();
                options.onUnitClick!(unitId);
            });
        }
        svg.appendChild(group);
    }
    return projection;
}

/** The value list beside the map; numbers are shown exactly as received. */
export function renderValueList(doc: Document, container: Element, values: ChoroplethValues): void {
    clear(container);
    const entries = Object.entries(values);
    if (entries.length === 0) {
        const empty = doc.createElement("p");
        empty.setAttribute("class", "empty");
        empty.textContent = "no flows for this selection";
        container.appendChild(empty);
        return;
    }
    const list = doc.createElement("ul");
    for (const [unitId, count] of entries) {
        const item = doc.createElement("li");
        item.setAttribute("data-unit-id", unitId);
        item.setAttribute("data-count", String(count));
        item.textContent = `${unitId}: ${count}`;
        list.appendChild(item);
    }
    container.appendChild(list);
}

export function renderLegend(doc: Document, container: Element, breaks: number[]): void {
    clear(container);
    for (let i = 0; i <= breaks.length; i++) {
        const entry = doc.createElement("span");
        entry.setAttribute("class", `legend-entry c${i}`);
        const lower = i === 0 ? "0" : `> ${breaks[i - 1]}`;
        entry.textContent = lower;
        container.appendChild(entry);
    }
}

/** Flow lines between centroids; stroke width is display-only count scaling. */
export function renderFlowLines(
    doc: Document,
    svg: SVGElement,
    projection: Projection,
    lines: FlowLineDatum[],
): void {
    const maxCount = lines.reduce((acc, line) => Math.max(acc, line.count), 0);
    for (const line of lines) {
        const element = doc.createElementNS(SVG_NS, "line");
        element.setAttribute("class", "flow");
        element.setAttribute("x1", String(projection.x(line.origin_lon)));
        element.setAttribute("y1", String(projection.y(line.origin_lat)));
        element.setAttribute("x2", String(projection.x(line.destination_lon)));
        element.setAttribute("y2", String(projection.y(line.destination_lat)));
        element.setAttribute("stroke-width", String(flowWidth(line.count, maxCount)));
        element.setAttribute("data-count", String(line.count));
        const title = doc.createElementNS(SVG_NS, "title");
        title.textContent = `${line.origin} -> ${line.destination}: ${line.count}`;
        element.appendChild(title);
        svg.appendChild(element);
    }
}

export function flowWidth(count: number, maxCount: number): number {
    if (maxCount <= 0) return 1;
    return 1 + 5 * (count / maxCount);
}

export function renderTimeseries(doc: Document, svg: SVGElement, points: SeriesPoint[]): void {
    clear(svg);
    const width = 640, height = 240, pad = 28;
    svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
    if (points.length === 0) return;
    const maxCount = points.reduce((acc, p) => Math.max(acc, p.count), 0);
    const xAt = (i: number) =>
        pad + (points.length === 1 ? 0 : (i / (points.length - 1)) * (width - 2 * pad));
    const yAt = (count: number) =>
        height - pad - (maxCount === 0 ? 0 : (count / maxCount) * (height - 2 * pad));

    const path = doc.createElementNS(SVG_NS, "polyline");
    path.setAttribute("class", "series");
    path.setAttribute("points", points.map((p, i) => `${xAt(i)},${yAt(p.count)}`).join(" "));
    svg.appendChild(path);

    points.forEach((point, i) => {
        const dot = doc.createElementNS(SVG_NS, "circle");
        dot.setAttribute("class", "series-point");
        dot.setAttribute("cx", String(xAt(i)));
        dot.setAttribute("cy", String(yAt(point.count)));
        dot.setAttribute("r", "2.5");
        dot.setAttribute("data-date", point.date);
        dot.setAttribute("data-count", String(point.count));
        const title = doc.createElementNS(SVG_NS, "title");
        title.textContent = `${point.date}: ${point.count}`;
        dot.appendChild(title);
        svg.appendChild(dot);
    });

    const labels: Array<[string, number, number]> = [
        [points[0].date, xAt(0), height - 6],
        [points[points.length - 1].date, xAt(points.length - 1), height - 6],
        [String(maxCount), pad, pad - 8],
    ];
    for (const [text, x, y] of labels) {
        const label = doc.createElementNS(SVG_NS, "text");
        label.setAttribute("x", String(x));
        label.setAttribute("y", String(y));
        label.setAttribute("class", "axis-label");
        label.textContent = text;
        svg.appendChild(label);
    }
}
