import { describe, expect, it } from "vitest";

import { AimTrainer, RATE_BOUNDS, RATE_INITIAL, TARGET_LIFETIME_MS } from "../src/aim.js";
import { OptimizerConsole } from "../src/dashboard.js";
import { FakeApi } from "./fake_api.js";

describe("aim trainer", () => {
  const field = { w: 900, h: 600, targetW: 40 };

  it("spawns on the rate schedule and bounds concurrency", () => {
    const trainer = new AimTrainer(new FakeApi(), "s", field);
    trainer.tick(0);
    expect(trainer.aliveCount).toBe(1);
    trainer.tick(10_000); // far ahead: many due spawns but bounded alive set
    expect(trainer.aliveCount).toBeLessThanOrEqual(4);
  });

  it("expiry counts as a miss and lowers the spawn rate", () => {
    const trainer = new AimTrainer(new FakeApi(), "s", field);
    trainer.tick(0);
    const before = trainer.rate;
    trainer.tick(TARGET_LIFETIME_MS + 1);
    expect(trainer.misses).toBeGreaterThan(0);
    expect(trainer.rate).toBeLessThan(before);
  });

  it("hits submit trials and raise the rate within bounds", async () => {
    const api = new FakeApi();
    const trainer = new AimTrainer(api, "s", field, null, 7);
    trainer.pointerMove(0, 450, 300);
    for (let i = 0; i < 600; i++) {
      const now = i * 100;
      trainer.tick(now);
      // click the oldest alive target dead-center
      const t = (trainer as unknown as { alive: { x: number; y: number }[] }).alive[0];
      if (t) trainer.click(now + 1, t.x, t.y);
    }
    expect(trainer.hits).toBeGreaterThan(100);
    expect(api.trials.length).toBe(trainer.hits);
    expect(trainer.rate).toBeGreaterThan(RATE_INITIAL);
    expect(trainer.rate).toBeLessThanOrEqual(RATE_BOUNDS[1]);
    expect(trainer.successRate).toBeGreaterThan(0.9);
  });
});

describe("optimizer console", () => {
  function makeSvg(): SVGSVGElement {
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    document.body.appendChild(svg);
    return svg as SVGSVGElement;
  }

  it("renders the posterior band, mean, and suggestion marker", async () => {
    document.body.innerHTML = "";
    const api = new FakeApi();
    const status = document.createElement("span");
    const con = new OptimizerConsole(api, "s", makeSvg(), status);
    await con.refresh();
    expect(document.querySelector("polygon.band")).toBeTruthy();
    expect(document.querySelector("polyline.mean")).toBeTruthy();
    expect(document.querySelector("line.suggestion")).toBeTruthy();
    expect(status.textContent).toContain("suggested=30%");
  });

  it("completeBlock forwards a pending override with its source tag", async () => {
    const api = new FakeApi();
    const con = new OptimizerConsole(api, "s");
    con.setOverride(44);
    await con.completeBlock(0.021);
    expect(api.steps[0]).toEqual({ pdr: 0.021, p_percent: 44, source: "override" });
    await con.completeBlock(0.02);
    expect(api.steps[1]).toEqual({ pdr: 0.02 }); // override consumed
  });

  it("rejects overrides outside the calibration domain", () => {
    const con = new OptimizerConsole(new FakeApi(), "s");
    expect(() => con.setOverride(10)).toThrow();
    expect(() => con.setOverride(90)).toThrow();
  });

  it("exports a standalone SVG report of the service data", async () => {
    const api = new FakeApi();
    api.state.observations = [
      { p_percent: 30, pdr: 0.021, source: "session" },
      { p_percent: 44, pdr: 0.018, source: "override" },
    ];
    const con = new OptimizerConsole(api, "s");
    await con.refresh();
    const svg = con.exportSvg();
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg).toContain('class="mean"');
    expect((svg.match(/class="obs/g) ?? []).length).toBe(2);
    expect(svg).toContain("obs override");
  });
});
