// Page wiring: two panels (editing session and source sample), toolbar,
// background swap and the embedding interpolation slider.

import { EditServiceClient } from "./api";
import { EditorCanvas } from "./canvasView";
import { CoordinateMapper } from "./coords";
import { EditorController } from "./editor";

const VIEW_SIZE = 512;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 2500);
}

function main(): void {
  const api = new EditServiceClient("");
  // image resolution is read from the first sample's keypoint scale; until
  // then assume the canvas size (only used for overlay math)
  const mapper = new CoordinateMapper(VIEW_SIZE, VIEW_SIZE);

  const controller = new EditorController(api, mapper, undefined, {
    onRender: () => {
      mainCanvas.setImage(controller.model.imagePngB64);
      mainCanvas.draw();
      sourceImg.src = controller.source.imagePngB64
        ? `data:image/png;base64,${controller.source.imagePngB64}`
        : "";
      el<HTMLSpanElement>("undo-depth").textContent = String(controller.model.undo.depth);
      el<HTMLPreElement>("scene-dump").textContent = JSON.stringify(
        controller.model.acknowledged,
        null,
        1,
      );
    },
    onError: (message) => toast(message),
  });

  const mainCanvas = new EditorCanvas(
    el<HTMLCanvasElement>("editor-canvas"),
    controller,
    {
      onSelect: (index) => {
        el<HTMLSpanElement>("selection").textContent =
          index === null ? "none" : [...controller.model.selected].join(", ");
      },
    },
  );

  const sourceImg = el<HTMLImageElement>("source-image");

  el<HTMLButtonElement>("btn-sample").addEventListener("click", () => {
    const seedRaw = el<HTMLInputElement>("seed").value;
    void controller
      .sample(seedRaw === "" ? undefined : Number(seedRaw))
      .catch((e) => toast(String(e)));
  });
  el<HTMLButtonElement>("btn-source").addEventListener("click", () => {
    void controller.sampleSource().catch((e) => toast(String(e)));
  });
  el<HTMLButtonElement>("btn-remove").addEventListener("click", () => {
    void controller.removeSelected();
  });
  el<HTMLButtonElement>("btn-undo").addEventListener("click", () => {
    void controller.undo();
  });
  el<HTMLButtonElement>("btn-swap-bg").addEventListener("click", () => {
    void controller.swapBackground();
  });
  const addToggle = el<HTMLInputElement>("toggle-add");
  addToggle.addEventListener("change", () => {
    mainCanvas.addMode = addToggle.checked;
  });
  const overlayToggle = el<HTMLInputElement>("toggle-overlay");
  overlayToggle.addEventListener("change", () => {
    // client-only: no request leaves the page for this
    mainCanvas.overlayVisible = overlayToggle.checked;
    mainCanvas.draw();
  });
  const slider = el<HTMLInputElement>("interp-slider");
  slider.addEventListener("change", () => {
    void controller.setInterpolation(Number(slider.value) / 100);
  });

  void controller.sample().catch((e) => toast(String(e)));
}

main();
