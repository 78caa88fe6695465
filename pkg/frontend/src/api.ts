/**
 * Typed client for the annotation service HTTP API.
 *
 * One in-flight prompt request per session: a new propose() aborts any
 * pending one, so a fast expert never waits on a stale gesture.
 */

import type { Box, ImagePoint } from "./coords.js";

export interface SessionInfo {
  session_id: string;
  sample_id: string;
  width: number;
  height: number;
  created_at: string;
}

export interface WireProposal {
  rle: string;
  predicted_iou: number;
}

export interface ProgressSnapshot {
  annotated: number;
  budgets: Record<string, boolean>;
}

export interface CommitResponse {
  sample_id: string;
  mode: string;
  annotator: string;
  created_at: string;
  rle: string;
  nonce: string;
}

export class ApiError extends Error {
  constructor(public status: number, public kind: string, detail: string) {
    super(`${kind}: ${detail}`);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let kind = "HttpError";
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string; detail?: string };
      kind = body.error ?? kind;
      detail = body.detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, kind, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  private inFlight: AbortController | null = null;

  constructor(
    private readonly base: string = "",
    private readonly annotator: string = "expert",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  imageUrl(sampleId: string): string {
    return `${this.base}/images/${encodeURIComponent(sampleId)}`;
  }

  async openSession(sampleId: string): Promise<SessionInfo> {
    const resp = await this.fetchImpl(`${this.base}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sample_id: sampleId }),
    });
    return asJson<SessionInfo>(resp);
  }

  /** Box prompt; cancels any pending prompt request. */
  async proposeBox(sessionId: string, box: Box): Promise<WireProposal[]> {
    return this.propose(sessionId, {
      kind: "box",
      box: [box.x0, box.y0, box.x1, box.y1],
    });
  }

  /** Foreground point prompt; cancels any pending prompt request. */
  async proposePoint(sessionId: string, point: ImagePoint): Promise<WireProposal[]> {
    return this.propose(sessionId, {
      kind: "point",
      point: [point.x, point.y],
      label: "foreground",
    });
  }

  private async propose(sessionId: string, body: unknown): Promise<WireProposal[]> {
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    try {
      const resp = await this.fetchImpl(
        `${this.base}/sessions/${encodeURIComponent(sessionId)}/prompts`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify(body),
          signal: controller.signal,
        },
      );
      const parsed = await asJson<{ proposals: WireProposal[] }>(resp);
      return parsed.proposals;
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
  }

  async commit(sessionId: string, proposalIndex: number, nonce: string): Promise<CommitResponse> {
    const resp = await this.fetchImpl(
      `${this.base}/sessions/${encodeURIComponent(sessionId)}/commit`,
      {
        method: "POST",
        headers: {
          "Content-Type": "application/json",
          "X-Annotator": this.annotator,
        },
        body: JSON.stringify({ proposal_index: proposalIndex, nonce }),
      },
    );
    return asJson<CommitResponse>(resp);
  }

  async progress(): Promise<ProgressSnapshot> {
    const resp = await this.fetchImpl(`${this.base}/progress`);
    return asJson<ProgressSnapshot>(resp);
  }
}
