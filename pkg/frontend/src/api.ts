/**
 * Typed client for the vmouse service (see PROTOCOL.md in the repo root).
 *
 * The UI never computes metrics itself: summaries and posterior curves are
 * fetched as the service produced them, and `summaryText` returns the raw
 * response body so callers can compare results byte-for-byte.
 */

export type Point = [number, number];
export type PathSample = [number, number, number]; // t_ms, x, y

export interface SessionStart {
  v: number;
  session_id: string;
  p_percent: number;
  targets: Point[];
  order: number[];
}

export interface TrialPayload {
  prev_target: Point;
  target: Point;
  click: Point;
  path: PathSample[];
  success?: boolean;
}

export interface StepResult {
  v: number;
  next_p: number;
  n_obs: number;
  observed?: { p_percent: number; pdr: number };
  posterior_argmin?: number;
}

export interface OptimizerState {
  v: number;
  observations: { p_percent: number; pdr: number; source: string }[];
  posterior: { grid: number[]; mean: number[]; sd: number[] };
  suggestion: number | null;
  p_percent: number;
  incumbent?: number;
  posterior_argmin?: number;
}

export interface SessionConfig {
  d_px: number;
  w_px: number;
  p_percent?: number;
  cpi?: number;
  source?: string;
}

export interface VmouseApi {
  startSession(config: SessionConfig): Promise<SessionStart>;
  submitTrial(sessionId: string, trial: TrialPayload): Promise<void>;
  summaryText(sessionId: string): Promise<string>;
  optimizerStep(
    sessionId: string,
    body?: { pdr?: number; p_percent?: number; source?: string },
  ): Promise<StepResult>;
  optimizerState(sessionId: string): Promise<OptimizerState>;
}

export class HttpApi implements VmouseApi {
  constructor(readonly baseUrl: string) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    if (!res.ok) {
      throw new Error(`POST ${path} failed: ${res.status} ${await res.text()}`);
    }
    return (await res.json()) as T;
  }

  async startSession(config: SessionConfig): Promise<SessionStart> {
    return this.post<SessionStart>("/session/start", {
      source: "cursor-only",
      ...config,
    });
  }

  async submitTrial(sessionId: string, trial: TrialPayload): Promise<void> {
    await this.post(`/session/${sessionId}/trial`, trial);
  }

  async summaryText(sessionId: string): Promise<string> {
    const res = await fetch(`${this.baseUrl}/session/${sessionId}/summary`);
    if (!res.ok) {
      throw new Error(`summary failed: ${res.status} ${await res.text()}`);
    }
    return res.text();
  }

  async optimizerStep(
    sessionId: string,
    body?: { pdr?: number; p_percent?: number; source?: string },
  ): Promise<StepResult> {
    return this.post<StepResult>(`/optimizer/${sessionId}/step`, body ?? {});
  }

  async optimizerState(sessionId: string): Promise<OptimizerState> {
    const res = await fetch(`${this.baseUrl}/optimizer/${sessionId}/state`);
    if (!res.ok) throw new Error(`state failed: ${res.status}`);
    return (await res.json()) as OptimizerState;
  }

  /** Push channel; returns null where WebSocket is unavailable (tests). */
  connectStream(
    sessionId: string,
    onMessage: (msg: Record<string, unknown>) => void,
  ): WebSocket | null {
    if (typeof WebSocket === "undefined") return null;
    const ws = new WebSocket(
      this.baseUrl.replace(/^http/, "ws") + `/session/${sessionId}/stream`,
    );
    ws.onmessage = (ev) => onMessage(JSON.parse(ev.data as string));
    return ws;
  }
}
