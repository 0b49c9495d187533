// DOM-free editor controller: every user interaction becomes exactly one
// service call (drag previews excepted, which are throttled), and the view
// model is reconciled from each response.

import { EditServiceClient, ApiError } from "./api";
import { CoordinateMapper } from "./coords";
import { EditQueue } from "./queue";
import { UiSceneModel } from "./sceneModel";
import type { EditOp, EditResponse, SceneState } from "./types";

export type EditorEvents = {
  onRender?: () => void;
  onError?: (message: string) => void;
};

export class EditorController {
  readonly model = new UiSceneModel();
  readonly source = new UiSceneModel();
  /** Embeddings captured when the swap panel pairs two sessions; the slider
   * interpolates from these absolute endpoints. */
  private swapBase: number[][] | null = null;

  constructor(
    readonly api: EditServiceClient,
    readonly mapper: CoordinateMapper,
    readonly queue = new EditQueue(),
    private readonly events: EditorEvents = {},
  ) {}

  private render(): void {
    this.events.onRender?.();
  }

  private fail(err: unknown): void {
    const message = err instanceof ApiError ? err.detail : String(err);
    this.events.onError?.(message);
  }

  async sample(seed?: number): Promise<void> {
    const doc = await this.api.sample(seed);
    this.model.load({
      sessionId: doc.session_id,
      scene: doc.scene_state,
      imagePngB64: doc.image_png_b64,
      keypointsPx: doc.keypoints_px,
    });
    this.swapBase = null;
    this.render();
  }

  async sampleSource(seed?: number): Promise<void> {
    const doc = await this.api.sample(seed);
    this.source.load({
      sessionId: doc.session_id,
      scene: doc.scene_state,
      imagePngB64: doc.image_png_b64,
      keypointsPx: doc.keypoints_px,
    });
    this.model.sourceSessionId = doc.session_id;
    this.swapBase = this.model.acknowledged
      ? this.model.acknowledged.w_per_kp.map((row) => [...row])
      : null;
    this.render();
  }

  /** Send ops as a committed edit; reconcile or revert on failure. */
  commit(ops: EditOp[], asUndo = false): Promise<void> {
    return this.queue.submit(async () => {
      try {
        const doc = await this.api.edit(this.model.sessionId, ops);
        this.applyResponse(doc, asUndo);
      } catch (err) {
        this.model.revert();
        this.fail(err);
      }
      this.render();
    });
  }

  private applyResponse(doc: EditResponse, asUndo: boolean): void {
    if (asUndo) {
      this.model.reconcileUndo(doc.scene_state, doc.image_png_b64, doc.keypoints_px);
    } else {
      this.model.reconcile(doc.scene_state, doc.image_png_b64, doc.keypoints_px);
    }
  }

  // -- dragging ------------------------------------------------------------

  dragStart(index: number): void {
    this.model.beginDrag(index);
  }

  dragMove(index: number, viewDx: number, viewDy: number): void {
    const base = this.model.acknowledged;
    if (!base) return;
    const [x, y] = base.coords[index];
    const coord: [number, number] = [
      this.mapper.clampNorm(x + this.mapper.deltaToNorm(viewDx)),
      this.mapper.clampNorm(y + this.mapper.deltaToNorm(viewDy)),
    ];
    this.model.previewDrag(index, coord);
    this.render();
    this.queue.preview(async () => {
      try {
        const doc = await this.api.edit(this.model.sessionId, [
          this.moveOp(index, viewDx, viewDy),
        ]);
        // preview only: show the server's render but do not advance state
        this.model.imagePngB64 = doc.image_png_b64;
      } catch {
        // previews are best-effort
      }
      this.render();
    });
  }

  /** Drop: one unthrottled move op; zero-pixel drags send nothing. */
  dragEnd(index: number, viewDx: number, viewDy: number): Promise<void> {
    if (viewDx === 0 && viewDy === 0) {
      this.model.revert();
      this.render();
      return Promise.resolve();
    }
    return this.commit([this.moveOp(index, viewDx, viewDy)]);
  }

  private moveOp(index: number, viewDx: number, viewDy: number): EditOp {
    return {
      kind: "move",
      indices: [index],
      delta: [this.mapper.deltaToNorm(viewDx), this.mapper.deltaToNorm(viewDy)],
    };
  }

  // -- toolbar ---------------------------------------------------------------

  addPartAt(viewX: number, viewY: number, sourceIndex: number): Promise<void> {
    const coord: [number, number] = [
      this.mapper.clampNorm(this.mapper.toNorm(viewX)),
      this.mapper.clampNorm(this.mapper.toNorm(viewY)),
    ];
    return this.commit([{ kind: "add_part", coord, source_index: sourceIndex }]);
  }

  removeSelected(): Promise<void> {
    const ops: EditOp[] = [...this.model.selected]
      .sort((a, b) => a - b)
      .map((index) => ({ kind: "remove_part", index }));
    this.model.selected.clear();
    if (ops.length === 0) return Promise.resolve();
    return this.commit(ops);
  }

  undo(): Promise<void> {
    const ops = this.model.undo.pop();
    if (!ops) return Promise.resolve();
    return this.commit(ops, true);
  }

  // -- swap panel --------------------------------------------------------------

  swapBackground(): Promise<void> {
    const src = this.model.sourceSessionId;
    if (!src) return Promise.resolve();
    return this.queue.submit(async () => {
      try {
        const doc = await this.api.swap(this.model.sessionId, src, [], true);
        this.applyResponse(doc, false);
      } catch (err) {
        this.fail(err);
      }
      this.render();
    });
  }

  /**
   * Absolute interpolation between this session's original embeddings and
   * the source's, on the selected parts. t=0 restores the originals, t=1 is
   * a hard swap, anything between sends an interpolation from the recorded
   * base so repeated slider motion does not compound.
   */
  setInterpolation(t: number): Promise<void> {
    const src = this.source.acknowledged;
    if (!src || !this.swapBase || this.model.selected.size === 0) {
      return Promise.resolve();
    }
    this.model.interpolationT = t;
    const indices = [...this.model.selected].sort((a, b) => a - b);
    const baseRows = indices.map((i) => this.swapBase![i]);
    const srcRows = indices.map((i) => src.w_per_kp[i]);
    let ops: EditOp[];
    if (t === 0) {
      ops = [{ kind: "swap_embeddings", indices, embeddings: baseRows }];
    } else if (t === 1) {
      ops = [{ kind: "swap_embeddings", indices, embeddings: srcRows }];
    } else {
      ops = [
        { kind: "swap_embeddings", indices, embeddings: baseRows },
        { kind: "interpolate_embeddings", indices, embeddings: srcRows, t },
      ];
    }
    return this.commit(ops);
  }

  displayedScene(): SceneState | null {
    return this.model.acknowledged;
  }
}
