/**
 * Canvas <-> image coordinate mapping and box normalisation.
 *
 * The canvas is the image scaled by an integer-or-fractional zoom factor;
 * canvas pixel (cx, cy) corresponds to image point (cx/zoom, cy/zoom).
 * Boxes use the exclusive-max convention (x0 < x1, y0 < y1) shared with the
 * service and the prompt simulator.
 */

export interface ImagePoint {
  x: number;
  y: number;
}

export interface Box {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function canvasToImage(cx: number, cy: number, zoom: number): ImagePoint {
  return { x: cx / zoom, y: cy / zoom };
}

export function imageToCanvas(px: number, py: number, zoom: number): { x: number; y: number } {
  return { x: px * zoom, y: py * zoom };
}

export function clampPoint(p: ImagePoint, width: number, height: number): ImagePoint {
  return {
    x: Math.min(Math.max(p.x, 0), width - 1e-6),
    y: Math.min(Math.max(p.y, 0), height - 1e-6),
  };
}

/** Order two drag endpoints into a valid exclusive-max box, clamped to the image. */
export function normalizeBox(a: ImagePoint, b: ImagePoint, width: number, height: number): Box {
  return {
    x0: Math.min(Math.max(Math.min(a.x, b.x), 0), width),
    y0: Math.min(Math.max(Math.min(a.y, b.y), 0), height),
    x1: Math.min(Math.max(Math.max(a.x, b.x), 0), width),
    y1: Math.min(Math.max(Math.max(a.y, b.y), 0), height),
  };
}

/** A box that selects no pixels must never reach the service. */
export function isDegenerate(box: Box): boolean {
  return !(box.x0 < box.x1 && box.y0 < box.y1);
}
