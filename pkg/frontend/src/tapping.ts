/**
 * Multi-directional tapping task.
 *
 * Fifteen circular targets are rendered exactly where the service placed
 * them; the active target is highlighted in green, a missed click turns the
 * target red, and the sequence always advances. The first click (on the
 * highlighted first target) starts the session; sixteen clicks complete it,
 * after which the service summary is fetched. Trial events are submitted
 * in order with acknowledged delivery.
 */
import type { PathSample, Point, SessionConfig, SessionStart, VmouseApi } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export type TappingPhase = "idle" | "waiting-start" | "running" | "done" | "error";

export class TappingTask {
  phase: TappingPhase = "idle";
  session: SessionStart | null = null;
  clicks = 0;
  trialsSubmitted = 0;
  onComplete: ((summaryText: string) => void) | null = null;
  onError: ((err: unknown) => void) | null = null;

  private wPx = 0;
  private circles: SVGCircleElement[] = [];
  private path: PathSample[] = [];
  private lastMissed: number | null = null;
  private submitChain: Promise<void> = Promise.resolve();

  constructor(
    private readonly api: VmouseApi,
    private readonly root: SVGSVGElement,
  ) {}

  /** Start a service session and render its geometry (never our own). */
  async start(config: SessionConfig): Promise<SessionStart> {
    this.session = await this.api.startSession(config);
    this.wPx = config.w_px;
    this.clicks = 0;
    this.trialsSubmitted = 0;
    this.path = [];
    this.lastMissed = null;
    this.renderTargets();
    this.phase = "waiting-start";
    this.highlight();
    return this.session;
  }

  private renderTargets(): void {
    const doc = this.root.ownerDocument;
    this.root.replaceChildren();
    this.circles = [];
    for (const [x, y] of this.session!.targets) {
      const c = doc.createElementNS(SVG_NS, "circle") as SVGCircleElement;
      c.setAttribute("cx", String(x));
      c.setAttribute("cy", String(y));
      c.setAttribute("r", String(this.wPx / 2));
      c.setAttribute("class", "target");
      this.root.appendChild(c);
      this.circles.push(c);
    }
  }

  /** Index (into targets) of the target the next click should hit. */
  get activeTarget(): number {
    const order = this.session!.order;
    return order[Math.min(this.clicks, order.length - 1)]!;
  }

  targetClass(index: number): string {
    return this.circles[index]?.getAttribute("class") ?? "";
  }

  private highlight(): void {
    this.circles.forEach((c, i) => {
      let cls = "target";
      if (i === this.activeTarget) cls += " active";
      if (i === this.lastMissed) cls += " missed";
      c.setAttribute("class", cls);
    });
  }

  /** Timestamped cursor samples; timestamps in ms. */
  pointerMove(tMs: number, x: number, y: number): void {
    if (this.phase !== "running") return;
    this.path.push([tMs, x, y]);
  }

  private hit(index: number, x: number, y: number): boolean {
    const [tx, ty] = this.session!.targets[index]!;
    return Math.hypot(x - tx, y - ty) <= this.wPx / 2;
  }

  /**
   * One mouse click. Returns true when the click advanced the session
   * (the starting click only counts once it lands on the first target).
   */
  click(tMs: number, x: number, y: number): boolean {
    if (this.phase === "waiting-start") {
      if (!this.hit(this.activeTarget, x, y)) return false;
      this.clicks = 1;
      this.phase = "running";
      this.path = [[tMs, x, y]];
      this.highlight();
      return true;
    }
    if (this.phase !== "running") return false;

    const order = this.session!.order;
    const targetIdx = order[this.clicks]!;
    const prevIdx = order[this.clicks - 1]!;
    const success = this.hit(targetIdx, x, y);
    this.lastMissed = success ? null : targetIdx;
    this.path.push([tMs, x, y]);

    const payload = {
      prev_target: this.session!.targets[prevIdx]! as Point,
      target: this.session!.targets[targetIdx]! as Point,
      click: [x, y] as Point,
      path: this.path.slice(),
      success,
    };
    const sid = this.session!.session_id;
    this.submitChain = this.submitChain
      .then(() => this.api.submitTrial(sid, payload))
      .catch((err) => {
        this.phase = "error";
        this.onError?.(err);
        throw err;
      });

    this.trialsSubmitted += 1;
    this.clicks += 1;
    this.path = [[tMs, x, y]];
    if (this.clicks >= order.length) {
      this.phase = "done";
      void this.finish(sid);
    } else {
      this.highlight();
    }
    return true;
  }

  private async finish(sid: string): Promise<void> {
    try {
      await this.submitChain;
      const text = await this.api.summaryText(sid);
      this.onComplete?.(text);
    } catch (err) {
      this.phase = "error";
      this.onError?.(err);
    }
  }

  /** Wait until all submitted trials are acknowledged. */
  flush(): Promise<void> {
    return this.submitChain;
  }
}

/** Wire DOM pointer events to a task; prefers raw pointer updates. */
export function attachPointerInput(task: TappingTask, el: Element): void {
  const move = (ev: Event) => {
    const pe = ev as PointerEvent;
    task.pointerMove(pe.timeStamp, pe.clientX, pe.clientY);
  };
  if ("onpointerrawupdate" in el) {
    el.addEventListener("pointerrawupdate", move);
  } else {
    el.addEventListener("pointermove", move);
  }
  el.addEventListener("pointerdown", (ev) => {
    const pe = ev as PointerEvent;
    task.click(pe.timeStamp, pe.clientX, pe.clientY);
  });
}
