/**
 * Optimizer console: current position, observation history, and the GP
 * posterior over 20..80% with its confidence band. All numbers are taken
 * verbatim from the service; "next block" applies the EI suggestion (meant
 * to be pressed during a break), and a manual override is forwarded so the
 * resulting observation carries the override source tag.
 */
import type { OptimizerState, VmouseApi } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export class OptimizerConsole {
  state: OptimizerState | null = null;
  overrideP: number | null = null;

  constructor(
    private readonly api: VmouseApi,
    private readonly sessionId: string,
    private readonly plot: SVGSVGElement | null = null,
    private readonly status: HTMLElement | null = null,
  ) {}

  async refresh(): Promise<OptimizerState> {
    this.state = await this.api.optimizerState(this.sessionId);
    this.render();
    return this.state;
  }

  /** Apply the next suggested position (between blocks, not mid-game). */
  async nextBlock(): Promise<number> {
    const out = await this.api.optimizerStep(this.sessionId, {});
    await this.refresh();
    return out.next_p;
  }

  /** Report a finished block's PDR; honors a pending manual override. */
  async completeBlock(pdr: number): Promise<number> {
    const body: { pdr: number; p_percent?: number; source?: string } = { pdr };
    if (this.overrideP !== null) {
      body.p_percent = this.overrideP;
      body.source = "override";
      this.overrideP = null;
    }
    const out = await this.api.optimizerStep(this.sessionId, body);
    await this.refresh();
    return out.next_p;
  }

  setOverride(p: number): void {
    if (p < 20 || p > 80) throw new Error(`override ${p} outside 20..80`);
    this.overrideP = Math.round(p);
  }

  private render(): void {
    if (this.status && this.state) {
      const s = this.state;
      this.status.textContent =
        `p=${s.p_percent}%` +
        (s.suggestion !== null ? ` suggested=${s.suggestion}%` : "") +
        (s.posterior_argmin !== undefined ? ` best=${s.posterior_argmin}%` : "") +
        ` observations=${s.observations.length}`;
    }
    if (this.plot && this.state) {
      this.plot.replaceChildren();
      for (const el of renderPosterior(this.plot.ownerDocument, this.state)) {
        this.plot.appendChild(el);
      }
    }
  }

  /** Standalone SVG report of the posterior and history (exportable). */
  exportSvg(): string {
    if (!this.state) throw new Error("no state fetched yet");
    const parts = [
      `<svg xmlns="${SVG_NS}" viewBox="0 0 360 220">`,
      ...renderPosteriorMarkup(this.state),
      "</svg>",
    ];
    return parts.join("");
  }
}

const W = 360;
const H = 220;
const PAD = 28;

function scales(state: OptimizerState) {
  const { grid, mean, sd } = state.posterior;
  const lo = Math.min(...mean.map((m, i) => m - (sd[i] ?? 0)));
  const hi = Math.max(...mean.map((m, i) => m + (sd[i] ?? 0)));
  const span = hi - lo || 1;
  const x = (p: number) =>
    PAD + ((p - grid[0]!) / ((grid[grid.length - 1]! - grid[0]!) || 1)) * (W - 2 * PAD);
  const y = (v: number) => H - PAD - ((v - lo) / span) * (H - 2 * PAD);
  return { x, y };
}

function posteriorPaths(state: OptimizerState) {
  const { grid, mean, sd } = state.posterior;
  const { x, y } = scales(state);
  const line = grid.map((p, i) => `${x(p).toFixed(1)},${y(mean[i]!).toFixed(1)}`).join(" ");
  const upper = grid.map((p, i) => `${x(p).toFixed(1)},${y(mean[i]! + sd[i]!).toFixed(1)}`);
  const lower = grid
    .map((p, i) => `${x(p).toFixed(1)},${y(mean[i]! - sd[i]!).toFixed(1)}`)
    .reverse();
  const band = [...upper, ...lower].join(" ");
  const dots = state.observations.map((o) => ({
    x: x(o.p_percent),
    y: y(o.pdr),
    source: o.source,
  }));
  const marker = state.suggestion !== null ? x(state.suggestion) : null;
  return { line, band, dots, marker };
}

function renderPosteriorMarkup(state: OptimizerState): string[] {
  const { line, band, dots, marker } = posteriorPaths(state);
  const parts = [
    `<polygon class="band" points="${band}"/>`,
    `<polyline class="mean" fill="none" points="${line}"/>`,
  ];
  for (const d of dots) {
    parts.push(
      `<circle class="obs ${d.source}" cx="${d.x.toFixed(1)}" cy="${d.y.toFixed(1)}" r="3"/>`,
    );
  }
  if (marker !== null) {
    parts.push(
      `<line class="suggestion" x1="${marker.toFixed(1)}" y1="${PAD}" ` +
        `x2="${marker.toFixed(1)}" y2="${H - PAD}"/>`,
    );
  }
  return parts;
}

function renderPosterior(doc: Document, state: OptimizerState): Element[] {
  const { line, band, dots, marker } = posteriorPaths(state);
  const out: Element[] = [];
  const poly = doc.createElementNS(SVG_NS, "polygon");
  poly.setAttribute("class", "band");
  poly.setAttribute("points", band);
  out.push(poly);
  const mean = doc.createElementNS(SVG_NS, "polyline");
  mean.setAttribute("class", "mean");
  mean.setAttribute("fill", "none");
  mean.setAttribute("points", line);
  out.push(mean);
  for (const d of dots) {
    const c = doc.createElementNS(SVG_NS, "circle");
    c.setAttribute("class", `obs ${d.source}`);
    c.setAttribute("cx", d.x.toFixed(1));
    c.setAttribute("cy", d.y.toFixed(1));
    c.setAttribute("r", "3");
    out.push(c);
  }
  if (marker !== null) {
    const l = doc.createElementNS(SVG_NS, "line");
    l.setAttribute("class", "suggestion");
    l.setAttribute("x1", marker.toFixed(1));
    l.setAttribute("y1", String(PAD));
    l.setAttribute("x2", marker.toFixed(1));
    l.setAttribute("y2", String(H - PAD));
    out.push(l);
  }
  return out;
}
