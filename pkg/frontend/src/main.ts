/**
 * Page wiring: tapping task view, aim trainer, and optimizer console.
 * The service URL defaults to the same host on port 8173 (vmouse serve).
 */
import { HttpApi } from "./api.js";
import { AimTrainer } from "./aim.js";
import { OptimizerConsole } from "./dashboard.js";
import { attachPointerInput, TappingTask } from "./tapping.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function showBanner(message: string): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message;
  banner.hidden = false;
}

async function main(): Promise<void> {
  const base = `http://${location.hostname}:8173`;
  const api = new HttpApi(base);
  const svg = el<HTMLElement>("task").querySelector("svg") as unknown as SVGSVGElement;
  const task = new TappingTask(api, svg);
  attachPointerInput(task, svg);
  task.onError = () => showBanner("service unreachable - retrying when you resume");
  task.onComplete = (summary) => {
    el<HTMLPreElement>("summary").textContent = summary;
  };

  el<HTMLButtonElement>("start").addEventListener("click", async () => {
    el<HTMLDivElement>("banner").hidden = true;
    const d = Number(el<HTMLInputElement>("d-px").value);
    const w = Number(el<HTMLInputElement>("w-px").value);
    try {
      const session = await task.start({ d_px: d, w_px: w });
      const consoleEl = new OptimizerConsole(
        api,
        session.session_id,
        el<HTMLElement>("plot").querySelector("svg") as unknown as SVGSVGElement,
        el<HTMLSpanElement>("optimizer-status"),
      );
      el<HTMLButtonElement>("next-block").onclick = () => void consoleEl.nextBlock();
      el<HTMLButtonElement>("apply-override").onclick = () => {
        consoleEl.setOverride(Number(el<HTMLInputElement>("override-p").value));
      };
      el<HTMLButtonElement>("export").onclick = () => {
        el<HTMLPreElement>("summary").textContent = consoleEl.exportSvg();
      };
      // live stream of cursor/p pushes
      api.connectStream(session.session_id, (msg) => {
        if (msg["type"] === "p_changed") {
          el<HTMLSpanElement>("current-p").textContent = String(msg["p_percent"]);
        }
      });
      void consoleEl.refresh().catch(() => undefined);
    } catch (err) {
      showBanner(`cannot reach service at ${base}`);
      throw err;
    }
  });

  el<HTMLButtonElement>("start-aim").addEventListener("click", async () => {
    const session = await api.startSession({ d_px: 300, w_px: 40 });
    const aimSvg = el<HTMLElement>("aim").querySelector("svg") as unknown as SVGSVGElement;
    const trainer = new AimTrainer(
      api,
      session.session_id,
      { w: aimSvg.clientWidth || 900, h: aimSvg.clientHeight || 600, targetW: 40 },
      aimSvg,
    );
    aimSvg.addEventListener("pointermove", (ev) =>
      trainer.pointerMove(ev.timeStamp, ev.offsetX, ev.offsetY),
    );
    aimSvg.addEventListener("pointerdown", (ev) =>
      trainer.click(ev.timeStamp, ev.offsetX, ev.offsetY),
    );
    const t0 = performance.now();
    const timer = setInterval(() => trainer.tick(performance.now() - t0), 50);
    el<HTMLButtonElement>("stop-aim").onclick = () => clearInterval(timer);
  });
}

window.addEventListener("load", () => void main());
