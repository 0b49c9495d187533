// Canvas rendering and pointer handling for one session panel. All editing
// decisions live in EditorController; this layer only draws and translates
// pointer events into controller calls.

import type { EditorController } from "./editor";

const KEYPOINT_RADIUS = 6;

export type CanvasCallbacks = {
  onSelect?: (index: number | null) => void;
};

export class EditorCanvas {
  private ctx: CanvasRenderingContext2D;
  private image = new Image();
  private dragIndex: number | null = null;
  private dragStartPx: [number, number] | null = null;
  overlayVisible = true;
  addMode = false;

  constructor(
    readonly canvas: HTMLCanvasElement,
    readonly controller: EditorController,
    private readonly callbacks: CanvasCallbacks = {},
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
    this.image.onload = () => this.draw();
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
    canvas.addEventListener("pointerleave", (e) => this.pointerUp(e));
  }

  setImage(pngB64: string): void {
    if (!pngB64) return;
    this.image.src = `data:image/png;base64,${pngB64}`;
  }

  private canvasPoint(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [
      ((e.clientX - rect.left) / rect.width) * this.canvas.width,
      ((e.clientY - rect.top) / rect.height) * this.canvas.height,
    ];
  }

  private hitTest(px: number, py: number): number | null {
    const scene = this.controller.model.acknowledged;
    if (!scene) return null;
    const coords = this.controller.model.displayedCoords();
    let best: number | null = null;
    let bestDist = KEYPOINT_RADIUS * 2;
    coords.forEach(([x, y], i) => {
      if (!scene.active[i]) return;
      const vx = this.controller.mapper.toView(x);
      const vy = this.controller.mapper.toView(y);
      const dist = Math.hypot(vx - px, vy - py);
      if (dist < bestDist) {
        best = i;
        bestDist = dist;
      }
    });
    return best;
  }

  private pointerDown(e: PointerEvent): void {
    const [px, py] = this.canvasPoint(e);
    const hit = this.hitTest(px, py);
    if (this.addMode) {
      const source = hit ?? [...this.controller.model.selected][0] ?? 0;
      void this.controller.addPartAt(px, py, typeof source === "number" ? source : 0);
      return;
    }
    if (hit === null) {
      this.controller.model.selected.clear();
      this.callbacks.onSelect?.(null);
      this.draw();
      return;
    }
    if (e.shiftKey) {
      this.controller.model.selected.add(hit);
    } else {
      this.controller.model.selected.clear();
      this.controller.model.selected.add(hit);
    }
    this.callbacks.onSelect?.(hit);
    this.dragIndex = hit;
    this.dragStartPx = [px, py];
    this.controller.dragStart(hit);
    this.canvas.setPointerCapture(e.pointerId);
    this.draw();
  }

  private pointerMove(e: PointerEvent): void {
    if (this.dragIndex === null || !this.dragStartPx) return;
    const [px, py] = this.canvasPoint(e);
    this.controller.dragMove(
      this.dragIndex,
      px - this.dragStartPx[0],
      py - this.dragStartPx[1],
    );
  }

  private pointerUp(e: PointerEvent): void {
    if (this.dragIndex === null || !this.dragStartPx) return;
    const [px, py] = this.canvasPoint(e);
    const dx = px - this.dragStartPx[0];
    const dy = py - this.dragStartPx[1];
    const index = this.dragIndex;
    this.dragIndex = null;
    this.dragStartPx = null;
    void this.controller.dragEnd(index, dx, dy);
  }

  draw(): void {
    const { width, height } = this.canvas;
    this.ctx.clearRect(0, 0, width, height);
    this.ctx.imageSmoothingEnabled = false;
    if (this.image.complete && this.image.naturalWidth > 0) {
      this.ctx.drawImage(this.image, 0, 0, width, height);
    }
    if (!this.overlayVisible) return;
    const scene = this.controller.model.acknowledged;
    if (!scene) return;
    const coords = this.controller.model.displayedCoords();
    coords.forEach(([x, y], i) => {
      if (!scene.active[i]) return;
      const vx = this.controller.mapper.toView(x);
      const vy = this.controller.mapper.toView(y);
      this.ctx.beginPath();
      this.ctx.arc(vx, vy, KEYPOINT_RADIUS, 0, 2 * Math.PI);
      this.ctx.lineWidth = 2;
      this.ctx.strokeStyle = this.controller.model.selected.has(i) ? "#ff5722" : "#00e676";
      this.ctx.stroke();
      this.ctx.fillStyle = "rgba(0, 0, 0, 0.35)";
      this.ctx.fill();
      this.ctx.fillStyle = "#ffffff";
      this.ctx.font = "10px sans-serif";
      this.ctx.fillText(String(i), vx + KEYPOINT_RADIUS + 2, vy + 3);
    });
  }
}
