// Inverse-op history. The service keeps no history, so each acknowledged
// edit records the ops that take the new state back to the previous one.
// Inverses are computed by diffing the two acknowledged scene states, which
// stays exact even when the forward op clamped coordinates.

import type { EditOp, SceneState } from "./types";

export function inverseOps(before: SceneState, after: SceneState): EditOp[] {
  const ops: EditOp[] = [];

  // a part was appended: deactivate it (rendering-equivalent inverse)
  for (let i = before.k; i < after.k; i++) {
    ops.push({ kind: "remove_part", index: i });
  }

  // active flags flipped on shared parts
  for (let i = 0; i < before.k; i++) {
    if (before.active[i] && !after.active[i]) {
      ops.push({ kind: "restore_part", index: i });
    } else if (!before.active[i] && after.active[i]) {
      ops.push({ kind: "remove_part", index: i });
    }
  }

  // coordinates: one absolute restore covers every moved part; only valid
  // when K is unchanged (interpolate_pose requires matching masks, so undo
  // of an add already handled K above -- coords of shared parts are
  // untouched by add_part)
  if (before.k === after.k) {
    const movedIndices = before.coords
      .map((c, i) => (c[0] !== after.coords[i][0] || c[1] !== after.coords[i][1] ? i : -1))
      .filter((i) => i >= 0);
    if (movedIndices.length > 0) {
      ops.push({ kind: "interpolate_pose", coords: before.coords, t: 1 });
    }
  }

  // embeddings: restore the exact previous rows
  const changedRows: number[] = [];
  for (let i = 0; i < before.k; i++) {
    const a = before.w_per_kp[i];
    const b = after.w_per_kp[i];
    if (a.some((v, d) => v !== b[d])) changedRows.push(i);
  }
  if (changedRows.length > 0) {
    ops.push({
      kind: "swap_embeddings",
      indices: changedRows,
      embeddings: changedRows.map((i) => before.w_per_kp[i]),
    });
  }

  if (before.w_bg.some((v, d) => v !== after.w_bg[d])) {
    ops.push({ kind: "swap_background", w_bg: before.w_bg });
  }

  return ops;
}

export class UndoStack {
  private stack: EditOp[][] = [];

  record(before: SceneState, after: SceneState): void {
    const ops = inverseOps(before, after);
    if (ops.length > 0) this.stack.push(ops);
  }

  pop(): EditOp[] | undefined {
    return this.stack.pop();
  }

  get depth(): number {
    return this.stack.length;
  }

  clear(): void {
    this.stack = [];
  }
}
