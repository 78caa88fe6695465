/**
 * Canvas rendering: scene image, proposal overlays at 50% alpha with
 * distinct hues, the live drag rectangle, and selection highlighting.
 */

import type { DragState, Overlay } from "./state.js";
import type { DecodedMask } from "./rle.js";

const OVERLAY_COLORS: ReadonlyArray<readonly [number, number, number]> = [
  [46, 204, 113], // green
  [52, 152, 219], // blue
  [231, 76, 60], // red
];

export function maskToCanvas(mask: DecodedMask, rgb: readonly [number, number, number]): HTMLCanvasElement {
  const off = document.createElement("canvas");
  off.width = mask.width;
  off.height = mask.height;
  const ctx = off.getContext("2d");
  if (!ctx) return off;
  const img = ctx.createImageData(mask.width, mask.height);
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i]) {
      const o = i * 4;
      img.data[o] = rgb[0];
      img.data[o + 1] = rgb[1];
      img.data[o + 2] = rgb[2];
      img.data[o + 3] = 128; // 50% alpha
    }
  }
  ctx.putImageData(img, 0, 0);
  return off;
}

export function overlayColor(index: number): readonly [number, number, number] {
  return OVERLAY_COLORS[index % OVERLAY_COLORS.length] ?? OVERLAY_COLORS[0]!;
}

export function renderScene(
  canvas: HTMLCanvasElement,
  image: HTMLImageElement | null,
  overlays: Overlay[],
  selected: number | null,
  drag: DragState | null,
  zoom: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (image && image.complete && image.naturalWidth > 0) {
    ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
  }
  overlays.forEach((overlay, i) => {
    if (!overlay.visible) return;
    ctx.drawImage(maskToCanvas(overlay.mask, overlayColor(i)), 0, 0, canvas.width, canvas.height);
    if (i === selected) {
      ctx.strokeStyle = "#f1c40f";
      ctx.lineWidth = 3;
      ctx.strokeRect(1, 1, canvas.width - 2, canvas.height - 2);
    }
  });
  if (drag) {
    const { startCanvas: a, currentCanvas: b } = drag;
    ctx.strokeStyle = "#e67e22";
    ctx.lineWidth = 2;
    ctx.setLineDash([6, 4]);
    ctx.strokeRect(Math.min(a.x, b.x), Math.min(a.y, b.y), Math.abs(b.x - a.x), Math.abs(b.y - a.y));
    ctx.setLineDash([]);
  }
  void zoom;
}
