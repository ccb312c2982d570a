import { ApiClient } from "./api.js";
import { CLASS_COUNT, classIndex, quantileBreaks } from "./classing.js";
import {
    renderFlowLines,
    renderLegend,
    renderTimeseries,
    renderUnitLayer,
    renderValueList,
    type Projection,
} from "./render.js";
import { defaultState, directionsFor, hintForState, MODES, requestUrl } from "./state.js";
import type {
    Bbox,
    BoundaryCollection,
    BoundaryFeature,
    ChoroplethValues,
    Direction,
    ExplorerState,
    FlowLineDatum,
    MetaResponse,
    Mode,
    SeriesPoint,
} from "./types.js";

export type SaveFile = (filename: string, bytes: Uint8Array) => void;

export interface AppOptions {
    doc: Document;
    root: HTMLElement;
    client: ApiClient;
    saveFile?: SaveFile;
}

/**
 * The explorer: pick a dataset, level, and period; then inspect the cube as
 * a choropleth around a clicked unit, a flow map over a drawn bounding box,
 * a daily time-series chart, or a CSV download.  Every displayed number is a
 * value received from the service; the client does no aggregation of its
 * own.
 */
export class ExplorerApp {
    state: ExplorerState = defaultState();

    private readonly doc: Document;
    private readonly root: HTMLElement;
    private readonly client: ApiClient;
    private readonly saveFile: SaveFile;

    private meta: MetaResponse = { datasets: [] };
    private boundaries: BoundaryCollection | null = null;
    private projection: Projection | null = null;
    private els!: {
        dataset: HTMLSelectElement;
        level: HTMLSelectElement;
        start: HTMLInputElement;
        end: HTMLInputElement;
        mode: HTMLSelectElement;
        direction: HTMLSelectElement;
        minCount: HTMLInputElement;
        aggregated: HTMLInputElement;
        downloadButton: HTMLButtonElement;
        clearBboxButton: HTMLButtonElement;
        status: HTMLElement;
        map: SVGElement;
        chart: SVGElement;
        values: HTMLElement;
        legend: HTMLElement;
    };

    constructor(options: AppOptions) {
        this.doc = options.doc;
        this.root = options.root;
        this.client = options.client;
        this.saveFile = options.saveFile ?? (() => undefined);
        this.buildSkeleton();
    }

    private buildSkeleton(): void {
        const doc = this.doc;
        this.root.innerHTML = "";

        const controls = doc.createElement("div");
        controls.setAttribute("class", "controls");

        const select = (id: string, label: string): HTMLSelectElement => {
            const wrap = doc.createElement("label");
            wrap.textContent = label + " ";
            const element = doc.createElement("select");
            element.id = id;
            wrap.appendChild(element);
            controls.appendChild(wrap);
            return element;
        };
        const input = (id: string, label: string, type: string): HTMLInputElement => {
            const wrap = doc.createElement("label");
            wrap.textContent = label + " ";
            const element = doc.createElement("input");
            element.id = id;
            element.setAttribute("type", type);
            wrap.appendChild(element);
            controls.appendChild(wrap);
            return element;
        };

        const dataset = select("dataset", "dataset");
        const level = select("level", "level");
        const start = input("start", "from", "date");
        const end = input("end", "to", "date");
        const mode = select("mode", "view");
        for (const name of MODES) {
            const option = doc.createElement("option");
            option.value = name;
            option.textContent = name.replace("_", " ");
            mode.appendChild(option);
        }
        const direction = select("direction", "direction");
        for (const name of directionsFor(this.state.mode)) {
            const option = doc.createElement("option");
            option.value = name;
            option.textContent = name;
            direction.appendChild(option);
        }
        direction.value = this.state.direction;
        const minCount = input("min-count", "min count", "number");
        const aggregated = input("aggregated", "aggregated", "checkbox");
        const downloadButton = doc.createElement("button");
        downloadButton.id = "download";
        downloadButton.textContent = "download CSV";
        controls.appendChild(downloadButton);
        const clearBboxButton = doc.createElement("button");
        clearBboxButton.id = "clear-bbox";
        clearBboxButton.textContent = "clear bbox";
        controls.appendChild(clearBboxButton);

        const status = doc.createElement("p");
        status.id = "status";
        status.setAttribute("class", "status");

        const map = doc.createElementNS("http://www.w3.org/2000/svg", "svg") as SVGElement;
        map.setAttribute("id", "map");
        const legend = doc.createElement("div");
        legend.id = "legend";
        const values = doc.createElement("div");
        values.id = "values";
        const chart = doc.createElementNS("http://www.w3.org/2000/svg", "svg") as SVGElement;
        chart.setAttribute("id", "chart");

        this.root.appendChild(controls);
        this.root.appendChild(status);
        this.root.appendChild(map);
        this.root.appendChild(legend);
        this.root.appendChild(values);
        this.root.appendChild(chart);

        this.els = {
            dataset, level, start, end, mode, direction,
            minCount, aggregated, downloadButton, clearBboxButton,
            status, map, chart, values, legend,
        };

        dataset.addEventListener("change", () => this.pickDataset(dataset.value));
        level.addEventListener("change", () => this.pickLevel(level.value));
        start.addEventListener("change", () => this.setState({ start: start.value }));
        end.addEventListener("change", () => this.setState({ end: end.value }));
        mode.addEventListener("change", () => this.setMode(mode.value as Mode));
        direction.addEventListener("change", () =>
            this.setState({ direction: direction.value as Direction }),
        );
        minCount.addEventListener("change", () =>
            this.setState({ minCount: minCount.value === "" ? null : Number(minCount.value) }),
        );
        aggregated.addEventListener("change", () => this.setState({ aggregated: aggregated.checked }));
        downloadButton.addEventListener("click", () => void this.download());
        clearBboxButton.addEventListener("click", () => this.drawBbox(null));
        this.attachBboxDrag();
    }

    async init(): Promise<void> {
        const meta = await this.client.queryJson<MetaResponse>("meta", "/api/v1/meta");
        if (meta.kind === "error") {
            this.setStatus(`cannot reach the service: ${meta.message}`, "error");
            return;
        }
        if (meta.kind === "stale") return;
        this.meta = meta.body;

        const boundaries = await this.client.queryJson<BoundaryCollection>(
            "boundaries", "/api/v1/boundaries",
        );
        this.boundaries = boundaries.kind === "ok" ? boundaries.body : null;

        const first = this.meta.datasets[0];
        if (first) {
            this.fillSelect(this.els.dataset, this.meta.datasets.map((d) => d.name), first.name);
            this.pickDataset(first.name);
        } else {
            this.setStatus("the service has no cubes loaded", "error");
        }
    }

    private fillSelect(element: HTMLSelectElement, options: string[], value: string): void {
        element.innerHTML = "";
        for (const name of options) {
            const option = this.doc.createElement("option");
            option.value = name;
            option.textContent = name;
            element.appendChild(option);
        }
        element.value = value;
    }

    private datasetMeta(name: string) {
        return this.meta.datasets.find((d) => d.name === name);
    }

    pickDataset(name: string): void {
        const dataset = this.datasetMeta(name);
        if (!dataset || dataset.levels.length === 0) return;
        const levels = dataset.levels.map((l) => l.level);
        this.fillSelect(this.els.level, levels, levels[0]);
        this.state.dataset = name;
        this.pickLevel(levels[0]);
    }

    pickLevel(level: string): void {
        const dataset = this.datasetMeta(this.state.dataset);
        const levelMeta = dataset?.levels.find((l) => l.level === level);
        const start = levelMeta?.start ?? "";
        const end = levelMeta?.end ?? "";
        this.els.start.value = start;
        this.els.end.value = end;
        this.setState({ level, start, end, unitId: null, bbox: null });
    }

    setMode(mode: Mode): void {
        const allowed = directionsFor(mode);
        const direction = allowed.includes(this.state.direction)
            ? this.state.direction
            : (allowed[allowed.length - 1] as Direction);
        this.fillSelect(this.els.direction, allowed, direction);
        this.els.mode.value = mode;
        this.setState({ mode, direction });
    }

    /** Map click: a unit refreshes the active view; open water only hints. */
    selectUnit(unitId: string | null): void {
        if (unitId === null) {
            this.setStatus("no unit there; click a shaded unit", "hint");
            return;
        }
        this.setState({ unitId });
    }

    drawBbox(bbox: Bbox | null): void {
        this.setState({ bbox });
    }

    setState(partial: Partial<ExplorerState>): void {
        this.state = { ...this.state, ...partial };
        void this.refresh();
    }

    private setStatus(text: string, kind: "ok" | "hint" | "error" = "ok"): void {
        this.els.status.textContent = text;
        this.els.status.setAttribute("class", `status ${kind}`);
    }

    private levelFeatures(): BoundaryFeature[] {
        if (!this.boundaries) return [];
        return this.boundaries.features.filter(
            (f) => f.properties.level === this.state.level,
        );
    }

    async refresh(): Promise<void> {
        const state = this.state;
        if (state.mode === "download") {
            const url = requestUrl(state);
            this.setStatus(
                url === null ? "pick a dataset, level and period" : `ready to download ${url}`,
                url === null ? "hint" : "ok",
            );
            return;
        }
        const url = requestUrl(state);
        if (url === null) {
            this.drawBaseMap();
            this.setStatus(hintForState(state) ?? "selection incomplete", "hint");
            return;
        }
        const outcome = await this.client.queryJson<unknown>(state.mode, url);
        if (outcome.kind === "stale") return;
        if (outcome.kind === "error") {
            this.setStatus(outcome.message, "error");
            return;
        }
        switch (state.mode) {
            case "choropleth":
                this.renderChoropleth(outcome.body as ChoroplethValues);
                break;
            case "flow_map":
                this.renderFlowMap(outcome.body as FlowLineDatum[]);
                break;
            case "timeseries":
                this.renderSeries(outcome.body as SeriesPoint[]);
                break;
        }
        this.setStatus(`showing ${state.mode.replace("_", " ")} for ${state.dataset}/${state.level}`);
    }

    private drawBaseMap(fillClass?: (unitId: string) => string | null): void {
        this.projection = renderUnitLayer(this.doc, this.els.map, this.levelFeatures(), {
            fillClass,
            selectedUnit: this.state.unitId,
            onUnitClick: (unitId) => this.selectUnit(unitId),
            onBackgroundClick: () => this.selectUnit(null),
        });
    }

    private renderChoropleth(values: ChoroplethValues): void {
        const breaks = quantileBreaks(Object.values(values), CLASS_COUNT);
        this.drawBaseMap((unitId) =>
            unitId in values ? `c${classIndex(values[unitId], breaks)}` : null,
        );
        renderLegend(this.doc, this.els.legend, breaks);
        renderValueList(this.doc, this.els.values, values);
        renderTimeseries(this.doc, this.els.chart, []);
    }

    private renderFlowMap(lines: FlowLineDatum[]): void {
        this.drawBaseMap();
        if (this.projection) {
            renderFlowLines(this.doc, this.els.map, this.projection, lines);
            this.drawBboxOverlay();
        }
        this.els.values.innerHTML = "";
        const summary = this.doc.createElement("p");
        summary.id = "flow-summary";
        summary.textContent = `${lines.length} flow line(s)`;
        this.els.values.appendChild(summary);
        renderTimeseries(this.doc, this.els.chart, []);
    }

    private renderSeries(points: SeriesPoint[]): void {
        this.drawBaseMap();
        renderTimeseries(this.doc, this.els.chart, points);
        const values: ChoroplethValues = {};
        for (const point of points) values[point.date] = point.count;
        renderValueList(this.doc, this.els.values, values);
    }

    private drawBboxOverlay(): void {
        if (!this.state.bbox || !this.projection) return;
        const [minLon, minLat, maxLon, maxLat] = this.state.bbox;
        const rect = this.doc.createElementNS("http://www.w3.org/2000/svg", "rect");
        rect.setAttribute("class", "bbox");
        rect.setAttribute("x", String(this.projection.x(minLon)));
        rect.setAttribute("y", String(this.projection.y(maxLat)));
        rect.setAttribute("width", String(this.projection.x(maxLon) - this.projection.x(minLon)));
        rect.setAttribute("height", String(this.projection.y(minLat) - this.projection.y(maxLat)));
        this.els.map.appendChild(rect);
    }

    private attachBboxDrag(): void {
        let dragStart: { x: number; y: number } | null = null;
        const toSvg = (event: PointerEvent) => {
            const target = this.els.map as unknown as HTMLElement;
            const rect = target.getBoundingClientRect();
            const scaleX = rect.width > 0 ? 640 / rect.width : 1;
            const scaleY = rect.height > 0 ? 400 / rect.height : 1;
            return { x: (event.clientX - rect.left) * scaleX, y: (event.clientY - rect.top) * scaleY };
        };
        this.els.map.addEventListener("pointerdown", (event) => {
            if (this.state.mode !== "flow_map") return;
            dragStart = toSvg(event as PointerEvent);
        });
        this.els.map.addEventListener("pointerup", (event) => {
            if (dragStart === null || this.state.mode !== "flow_map" || !this.projection) return;
            const dragEnd = toSvg(event as PointerEvent);
            const p = this.projection;
            if (Math.abs(dragEnd.x - dragStart.x) < 4 || Math.abs(dragEnd.y - dragStart.y) < 4) {
                dragStart = null;
                return; // a click, not a drag
            }
            const bbox: Bbox = [
                Math.min(p.lon(dragStart.x), p.lon(dragEnd.x)),
                Math.min(p.lat(dragStart.y), p.lat(dragEnd.y)),
                Math.max(p.lon(dragStart.x), p.lon(dragEnd.x)),
                Math.max(p.lat(dragStart.y), p.lat(dragEnd.y)),
            ];
            dragStart = null;
            this.drawBbox(bbox);
        });
    }

    /** Fetch the export and hand the bytes to the file saver. */
    async download(): Promise<{ filename: string; bytes: Uint8Array } | null> {
        const url = requestUrl({ ...this.state, mode: "download" });
        if (url === null) {
            this.setStatus("pick a dataset, level and period first", "hint");
            return null;
        }
        const outcome = await this.client.fetchBytes(url);
        if (outcome.kind === "error") {
            // surfaced inline; a 413 carries the server's guidance text
            this.setStatus(outcome.message, "error");
            return null;
        }
        if (outcome.kind === "stale") return null;
        const filename =
            `${this.state.dataset}_${this.state.level}_${this.state.start}_${this.state.end}` +
            (this.state.aggregated ? "_aggregated.csv" : "_daily.csv");
        this.saveFile(filename, outcome.body);
        this.setStatus(`downloaded ${filename} (${outcome.body.byteLength} bytes)`);
        return { filename, bytes: outcome.body };
    }
}
