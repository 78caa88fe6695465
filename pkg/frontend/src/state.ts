/**
 * UI state machine for the expert annotation loop, kept free of DOM calls
 * so the logic is testable headless. The page layer subscribes to
 * onChange and renders whatever is in the controller.
 *
 * Invariants enforced here:
 *  - a selected proposal index is always within the pending list;
 *  - box gestures are normalised to x0 < x1, y0 < y1 and degenerate boxes
 *    never produce a request;
 *  - a later gesture replaces (aborts) an earlier in-flight prompt request.
 */

import { ApiClient, ApiError, ProgressSnapshot, SessionInfo, WireProposal } from "./api.js";
import { Box, ImagePoint, canvasToImage, clampPoint, isDegenerate, normalizeBox } from "./coords.js";
import { DecodedMask, decodeRle } from "./rle.js";

export type Tool = "box" | "point";

export interface Overlay {
  mask: DecodedMask;
  rle: string;
  predictedIou: number;
  visible: boolean;
}

export interface DragState {
  startCanvas: { x: number; y: number };
  currentCanvas: { x: number; y: number };
}

const makeNonce = (): string =>
  typeof crypto !== "undefined" && "randomUUID" in crypto
    ? crypto.randomUUID()
    : `n${Date.now()}-${Math.random().toString(36).slice(2)}`;

export class UiController {
  tool: Tool = "box";
  zoom = 4;
  session: SessionInfo | null = null;
  overlays: Overlay[] = [];
  selected: number | null = null;
  progress: ProgressSnapshot | null = null;
  drag: DragState | null = null;
  busy = false;
  statusMessage = "";

  onChange: () => void = () => {};

  constructor(
    private readonly api: ApiClient,
    private readonly nonceSource: () => string = makeNonce,
  ) {}

  private notify(): void {
    this.onChange();
  }

  get canCommit(): boolean {
    return this.session !== null && this.selected !== null && !this.busy;
  }

  selectedOverlay(): Overlay | null {
    return this.selected === null ? null : this.overlays[this.selected] ?? null;
  }

  async loadSample(sampleId: string): Promise<void> {
    this.busy = true;
    this.statusMessage = `opening session for ${sampleId}...`;
    this.notify();
    try {
      this.session = await this.api.openSession(sampleId);
      this.overlays = [];
      this.selected = null;
      this.drag = null;
      this.statusMessage = `session open on ${sampleId}`;
    } catch (err) {
      this.session = null;
      this.statusMessage = err instanceof ApiError ? err.message : String(err);
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  setTool(tool: Tool): void {
    this.tool = tool;
    this.drag = null;
    this.notify();
  }

  setZoom(zoom: number): void {
    this.zoom = Math.min(Math.max(zoom, 1), 16);
    this.notify();
  }

  /** Pointer-down on the canvas, in canvas pixel coordinates. */
  gestureStart(cx: number, cy: number): void {
    if (!this.session) return;
    this.drag = { startCanvas: { x: cx, y: cy }, currentCanvas: { x: cx, y: cy } };
    this.notify();
  }

  gestureMove(cx: number, cy: number): void {
    if (!this.drag) return;
    this.drag.currentCanvas = { x: cx, y: cy };
    this.notify();
  }

  /**
   * Pointer-up: converts the gesture to image coordinates and requests
   * proposals. Returns the prompt that was sent, or null when the gesture
   * was blocked client-side (degenerate box / no session).
   */
  async gestureEnd(cx: number, cy: number): Promise<Box | ImagePoint | null> {
    const session = this.session;
    const drag = this.drag;
    this.drag = null;
    if (!session || !drag) {
      this.notify();
      return null;
    }
    const start = canvasToImage(drag.startCanvas.x, drag.startCanvas.y, this.zoom);
    const end = canvasToImage(cx, cy, this.zoom);

    if (this.tool === "box") {
      const box = normalizeBox(start, end, session.width, session.height);
      if (isDegenerate(box)) {
        this.statusMessage = "zero-area box ignored";
        this.notify();
        return null;
      }
      await this.requestProposals(() => this.api.proposeBox(session.session_id, box));
      return box;
    }
    const point = clampPoint(end, session.width, session.height);
    await this.requestProposals(() => this.api.proposePoint(session.session_id, point));
    return point;
  }

  private async requestProposals(call: () => Promise<WireProposal[]>): Promise<void> {
    this.busy = true;
    this.statusMessage = "asking the model...";
    this.notify();
    try {
      const proposals = await call();
      this.overlays = proposals.map((p) => ({
        mask: decodeRle(p.rle),
        rle: p.rle,
        predictedIou: p.predicted_iou,
        visible: true,
      }));
      this.selected = null;
      this.statusMessage = `${proposals.length} proposals (keys 1-${proposals.length} select)`;
    } catch (err) {
      if ((err as Error).name === "AbortError") return; // superseded gesture
      this.overlays = [];
      this.selected = null;
      this.statusMessage = err instanceof ApiError ? err.message : String(err);
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  select(index: number): void {
    if (index >= 0 && index < this.overlays.length) {
      this.selected = index;
      this.notify();
    }
  }

  toggleOverlay(index: number): void {
    const overlay = this.overlays[index];
    if (overlay) {
      overlay.visible = !overlay.visible;
      this.notify();
    }
  }

  /** Commit the selected proposal; refreshes progress on success. */
  async commitSelected(): Promise<string | null> {
    if (!this.canCommit || this.selected === null || !this.session) return null;
    const nonce = this.nonceSource();
    this.busy = true;
    this.notify();
    try {
      const committed = await this.api.commit(this.session.session_id, this.selected, nonce);
      this.progress = await this.api.progress();
      this.statusMessage = `committed ${committed.sample_id} (${this.progress.annotated} annotated)`;
      return committed.rle;
    } catch (err) {
      this.statusMessage = err instanceof ApiError ? err.message : String(err);
      return null;
    } finally {
      this.busy = false;
      this.notify();
    }
  }

  async refreshProgress(): Promise<void> {
    try {
      this.progress = await this.api.progress();
    } catch {
      this.progress = null;
    }
    this.notify();
  }
}
