/**
 * Adaptive aim trainer used for in-task optimization blocks.
 *
 * Targets spawn at random positions, persist 3.5 s, and the spawn rate
 * multiplicatively chases a 92% hit rate. Every resolved target submits a
 * trial to the service; path deviation is computed service-side only.
 */
import type { PathSample, Point, VmouseApi } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export const TARGET_LIFETIME_MS = 3500;
export const RATE_INITIAL = 2.0;
export const RATE_BOUNDS: [number, number] = [0.25, 2.5];
export const SUCCESS_TARGET = 0.92;
export const MAX_ALIVE = 4;
const RATE_UP = 1.01;
const RATE_DOWN = Math.pow(RATE_UP, -SUCCESS_TARGET / (1 - SUCCESS_TARGET));

interface AliveTarget {
  spawnedAt: number;
  x: number;
  y: number;
  el: SVGCircleElement | null;
}

export class AimTrainer {
  rate = RATE_INITIAL;
  hits = 0;
  misses = 0;
  private alive: AliveTarget[] = [];
  private nextSpawn = 0;
  private path: PathSample[] = [];
  private lastPos: Point = [0, 0];
  private rng: () => number;

  constructor(
    private readonly api: VmouseApi,
    private readonly sessionId: string,
    private readonly field: { w: number; h: number; targetW: number },
    private readonly root: SVGSVGElement | null = null,
    seed = 1,
  ) {
    // deterministic LCG so tests can replay runs
    let s = seed >>> 0 || 1;
    this.rng = () => {
      s = (1103515245 * s + 12345) % 2147483648;
      return s / 2147483648;
    };
  }

  get aliveCount(): number {
    return this.alive.length;
  }

  pointerMove(tMs: number, x: number, y: number): void {
    this.lastPos = [x, y];
    this.path.push([tMs, x, y]);
  }

  /** Advance game time: spawn due targets, expire stale ones (as misses). */
  tick(nowMs: number): void {
    while (nowMs >= this.nextSpawn) {
      if (this.alive.length < MAX_ALIVE) {
        const m = this.field.targetW;
        this.alive.push({
          spawnedAt: this.nextSpawn,
          x: m + this.rng() * (this.field.w - 2 * m),
          y: m + this.rng() * (this.field.h - 2 * m),
          el: this.draw(),
        });
      }
      this.nextSpawn += 1000 / this.rate;
    }
    for (const t of [...this.alive]) {
      if (nowMs - t.spawnedAt >= TARGET_LIFETIME_MS) {
        this.resolve(t, nowMs, null);
      }
    }
  }

  private draw(): SVGCircleElement | null {
    if (!this.root) return null;
    const c = this.root.ownerDocument.createElementNS(SVG_NS, "circle") as SVGCircleElement;
    c.setAttribute("r", String(this.field.targetW / 2));
    c.setAttribute("class", "aim-target");
    this.root.appendChild(c);
    return c;
  }

  click(tMs: number, x: number, y: number): void {
    this.path.push([tMs, x, y]);
    // oldest target within reach wins
    for (const t of this.alive) {
      if (Math.hypot(x - t.x, y - t.y) <= this.field.targetW / 2) {
        this.resolve(t, tMs, [x, y]);
        return;
      }
    }
    this.misses += 1;
    this.adjust(false);
  }

  private resolve(t: AliveTarget, tMs: number, click: Point | null): void {
    this.alive = this.alive.filter((a) => a !== t);
    t.el?.remove();
    const hit = click !== null;
    if (hit) {
      this.hits += 1;
      const payload = {
        prev_target: this.path[0]?.slice(1) as Point ?? this.lastPos,
        target: [t.x, t.y] as Point,
        click: click!,
        path: this.path.slice(),
        success: true,
      };
      void this.api.submitTrial(this.sessionId, payload).catch(() => undefined);
      this.path = [[tMs, click![0], click![1]]];
    } else {
      this.misses += 1;
    }
    this.adjust(hit);
  }

  private adjust(hit: boolean): void {
    this.rate *= hit ? RATE_UP : RATE_DOWN;
    this.rate = Math.min(Math.max(this.rate, RATE_BOUNDS[0]), RATE_BOUNDS[1]);
  }

  get successRate(): number {
    const n = this.hits + this.misses;
    return n === 0 ? 1 : this.hits / n;
  }
}
