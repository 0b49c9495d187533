// Client-side mirror of one session's scene state.
//
// The model never diverges from the last server-acknowledged state except
// for the optimistic coordinate overlay maintained during an in-flight drag;
// reconcile() snaps everything back to whatever the server said.

import { UndoStack } from "./undo";
import type { SceneState } from "./types";
import { cloneScene } from "./types";

export type SessionView = {
  sessionId: string;
  scene: SceneState;
  imagePngB64: string;
  keypointsPx: [number, number][];
};

export class UiSceneModel {
  sessionId = "";
  /** Last server-acknowledged state; the single source of truth. */
  acknowledged: SceneState | null = null;
  imagePngB64 = "";
  keypointsPx: [number, number][] = [];
  /** Optimistic per-keypoint coordinate overrides while a drag is live. */
  private dragOverlay = new Map<number, [number, number]>();
  readonly undo = new UndoStack();
  selected = new Set<number>();
  interpolationT = 0;
  sourceSessionId: string | null = null;

  load(view: SessionView): void {
    this.sessionId = view.sessionId;
    this.acknowledged = cloneScene(view.scene);
    this.imagePngB64 = view.imagePngB64;
    this.keypointsPx = view.keypointsPx.map((p) => [...p] as [number, number]);
    this.dragOverlay.clear();
    this.undo.clear();
    this.selected.clear();
  }

  /** Coordinates to draw: acknowledged state plus any live drag overlay. */
  displayedCoords(): [number, number][] {
    if (!this.acknowledged) return [];
    return this.acknowledged.coords.map((c, i) => {
      const over = this.dragOverlay.get(i);
      return over ? ([...over] as [number, number]) : ([...c] as [number, number]);
    });
  }

  beginDrag(index: number): void {
    if (!this.acknowledged) return;
    this.dragOverlay.set(index, [...this.acknowledged.coords[index]] as [number, number]);
  }

  previewDrag(index: number, coord: [number, number]): void {
    this.dragOverlay.set(index, coord);
  }

  /** Acknowledge a server response, recording the undo step. */
  reconcile(scene: SceneState, imagePngB64: string, keypointsPx: [number, number][]): void {
    if (this.acknowledged) this.undo.record(this.acknowledged, scene);
    this.acknowledged = cloneScene(scene);
    this.imagePngB64 = imagePngB64;
    this.keypointsPx = keypointsPx.map((p) => [...p] as [number, number]);
    this.dragOverlay.clear();
  }

  /** Acknowledge an undo response without recording it as a new step. */
  reconcileUndo(scene: SceneState, imagePngB64: string, keypointsPx: [number, number][]): void {
    this.acknowledged = cloneScene(scene);
    this.imagePngB64 = imagePngB64;
    this.keypointsPx = keypointsPx.map((p) => [...p] as [number, number]);
    this.dragOverlay.clear();
  }

  /** Drop optimistic state after a rejected edit. */
  revert(): void {
    this.dragOverlay.clear();
  }

  get hasDragOverlay(): boolean {
    return this.dragOverlay.size > 0;
  }
}
