/**
 * Page wiring: binds DOM controls and pointer/keyboard events to the
 * UiController and redraws on every state change.
 *
 * Keyboard: 1/2/3 select a proposal, Enter commits, b/p switch tools.
 */

import { ApiClient } from "./api.js";
import { overlayColor, renderScene } from "./render.js";
import { UiController } from "./state.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

function main(): void {
  const canvas = byId<HTMLCanvasElement>("scene");
  const sampleInput = byId<HTMLInputElement>("sample-id");
  const loadButton = byId<HTMLButtonElement>("load");
  const boxButton = byId<HTMLButtonElement>("tool-box");
  const pointButton = byId<HTMLButtonElement>("tool-point");
  const commitButton = byId<HTMLButtonElement>("commit");
  const proposalList = byId<HTMLDivElement>("proposals");
  const progressBar = byId<HTMLDivElement>("progress");
  const status = byId<HTMLDivElement>("status");

  const annotator = new URLSearchParams(location.search).get("annotator") ?? "expert";
  const controller = new UiController(new ApiClient("", annotator));
  let image: HTMLImageElement | null = null;

  const redraw = (): void => {
    const session = controller.session;
    if (session) {
      canvas.width = session.width * controller.zoom;
      canvas.height = session.height * controller.zoom;
    }
    renderScene(canvas, image, controller.overlays, controller.selected,
      controller.drag, controller.zoom);

    boxButton.classList.toggle("active", controller.tool === "box");
    pointButton.classList.toggle("active", controller.tool === "point");
    commitButton.disabled = !controller.canCommit;
    status.textContent = controller.statusMessage;

    proposalList.replaceChildren(
      ...controller.overlays.map((overlay, i) => {
        const chip = document.createElement("button");
        const [r, g, b] = overlayColor(i);
        chip.className = "chip" + (controller.selected === i ? " selected" : "");
        chip.style.borderColor = `rgb(${r},${g},${b})`;
        chip.textContent = `${i + 1}: score ${overlay.predictedIou.toFixed(3)}` +
          (overlay.visible ? "" : " (hidden)");
        chip.onclick = () => controller.select(i);
        chip.oncontextmenu = (ev) => {
          ev.preventDefault();
          controller.toggleOverlay(i);
        };
        return chip;
      }),
    );

    const snapshot = controller.progress;
    if (snapshot) {
      progressBar.replaceChildren(
        Object.assign(document.createElement("span"),
          { textContent: `${snapshot.annotated} annotated` }),
        ...Object.entries(snapshot.budgets).map(([budget, reached]) =>
          Object.assign(document.createElement("span"), {
            className: "budget" + (reached ? " reached" : ""),
            textContent: `Δ(${budget})`,
          })),
      );
    }
  };
  controller.onChange = redraw;

  loadButton.onclick = async () => {
    const sampleId = sampleInput.value.trim();
    if (!sampleId) return;
    await controller.loadSample(sampleId);
    if (controller.session) {
      image = new Image();
      image.onload = redraw;
      image.src = new ApiClient().imageUrl(sampleId);
    }
  };

  boxButton.onclick = () => controller.setTool("box");
  pointButton.onclick = () => controller.setTool("point");
  commitButton.onclick = () => void controller.commitSelected();

  const canvasPos = (ev: PointerEvent): { x: number; y: number } => {
    const rect = canvas.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  };
  canvas.onpointerdown = (ev) => {
    canvas.setPointerCapture(ev.pointerId);
    const { x, y } = canvasPos(ev);
    controller.gestureStart(x, y);
  };
  canvas.onpointermove = (ev) => {
    const { x, y } = canvasPos(ev);
    controller.gestureMove(x, y);
  };
  canvas.onpointerup = (ev) => {
    const { x, y } = canvasPos(ev);
    void controller.gestureEnd(x, y);
  };

  document.onkeydown = (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    if (ev.key >= "1" && ev.key <= "9") controller.select(Number(ev.key) - 1);
    else if (ev.key === "Enter") void controller.commitSelected();
    else if (ev.key === "b") controller.setTool("box");
    else if (ev.key === "p") controller.setTool("point");
    else if (ev.key === "+") controller.setZoom(controller.zoom + 1);
    else if (ev.key === "-") controller.setZoom(controller.zoom - 1);
  };

  void controller.refreshProgress();
  redraw();
}

main();
