// In-memory stand-in for the edit service, implementing the same wire
// contract and edit semantics (float64 arithmetic, clamping, atomic op
// lists) so controller logic can be exercised without a backend.

import type { EditOp, SceneState } from "../src/types";
import { cloneScene } from "../src/types";

const clamp = (v: number) => Math.min(1, Math.max(-1, v));

export function applyOp(scene: SceneState, op: EditOp): SceneState {
  const out = cloneScene(scene);
  switch (op.kind) {
    case "move": {
      for (const i of op.indices) {
        if (i < 0 || i >= out.k) throw new Error(`index ${i} out of range`);
        if (!out.active[i]) throw new Error(`keypoint ${i} is not active`);
        out.coords[i] = [
          clamp(out.coords[i][0] + op.delta[0]),
          clamp(out.coords[i][1] + op.delta[1]),
        ];
      }
      return out;
    }
    case "interpolate_pose": {
      if (op.t < 0 || op.t > 1) throw new Error("t out of range");
      out.coords = out.coords.map((c, i) => [
        clamp((1 - op.t) * c[0] + op.t * op.coords[i][0]),
        clamp((1 - op.t) * c[1] + op.t * op.coords[i][1]),
      ]);
      return out;
    }
    case "swap_embeddings": {
      op.indices.forEach((i, row) => {
        if (i < 0 || i >= out.k) throw new Error(`index ${i} out of range`);
        out.w_per_kp[i] = [...op.embeddings[row]];
      });
      return out;
    }
    case "interpolate_embeddings": {
      if (op.t < 0 || op.t > 1) throw new Error("t out of range");
      op.indices.forEach((i, row) => {
        out.w_per_kp[i] = out.w_per_kp[i].map(
          (v, d) => (1 - op.t) * v + op.t * op.embeddings[row][d],
        );
      });
      return out;
    }
    case "swap_background": {
      out.w_bg = [...op.w_bg];
      return out;
    }
    case "add_part": {
      if (Math.abs(op.coord[0]) > 1 || Math.abs(op.coord[1]) > 1) {
        throw new Error("coord outside [-1, 1]^2");
      }
      const src = op.source_index;
      let row: number[];
      let slot: number;
      if (src !== undefined) {
        if (src < 0 || src >= out.k) throw new Error(`index ${src} out of range`);
        row = [...out.w_per_kp[src]];
        slot = op.slot ?? out.slots[src];
      } else if (op.embedding) {
        row = [...op.embedding];
        slot = op.slot ?? 0;
      } else {
        throw new Error("add_part needs a source");
      }
      out.coords.push([...op.coord]);
      out.active.push(true);
      out.w_per_kp.push(row);
      out.slots.push(slot);
      out.k += 1;
      return out;
    }
    case "remove_part": {
      if (op.index < 0 || op.index >= out.k) throw new Error("index out of range");
      if (!out.active[op.index]) throw new Error("already inactive");
      out.active[op.index] = false;
      return out;
    }
    case "restore_part": {
      if (op.index < 0 || op.index >= out.k) throw new Error("index out of range");
      if (out.active[op.index]) throw new Error("already active");
      out.active[op.index] = true;
      return out;
    }
    case "scale_about_centroid": {
      const indices =
        op.indices ?? out.active.flatMap((a, i) => (a ? [i] : []));
      if (indices.length === 0) throw new Error("nothing to scale");
      const cx = indices.reduce((s, i) => s + out.coords[i][0], 0) / indices.length;
      const cy = indices.reduce((s, i) => s + out.coords[i][1], 0) / indices.length;
      for (const i of indices) {
        out.coords[i] = [
          clamp(cx + op.factor * (out.coords[i][0] - cx)),
          clamp(cy + op.factor * (out.coords[i][1] - cy)),
        ];
      }
      return out;
    }
  }
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export class MockService {
  sessions = new Map<string, SceneState>();
  resolution: number;
  k: number;
  embedDim: number;
  requestLog: { method: string; path: string }[] = [];
  private counter = 0;

  constructor(resolution = 64, k = 3, embedDim = 4) {
    this.resolution = resolution;
    this.k = k;
    this.embedDim = embedDim;
  }

  private makeScene(seed: number): SceneState {
    const rand = mulberry32(seed + 1);
    const unit = () => rand() * 1.6 - 0.8;
    return {
      k: this.k,
      coords: Array.from({ length: this.k }, () => [unit(), unit()] as [number, number]),
      active: Array.from({ length: this.k }, () => true),
      w_per_kp: Array.from({ length: this.k }, () =>
        Array.from({ length: this.embedDim }, () => rand() * 2 - 1),
      ),
      w_bg: Array.from({ length: this.embedDim }, () => rand() * 2 - 1),
      w_global: null,
      slots: Array.from({ length: this.k }, (_, i) => i),
    };
  }

  private renderPng(scene: SceneState): string {
    // a fake but state-determined "image": the scene JSON, base64-encoded
    return btoa(JSON.stringify(scene));
  }

  private payload(id: string): unknown {
    const scene = this.sessions.get(id)!;
    return {
      session_id: id,
      scene_state: cloneScene(scene),
      image_png_b64: this.renderPng(scene),
      keypoints_px: scene.coords.map(([x, y]) => [
        ((x + 1) / 2) * this.resolution,
        ((y + 1) / 2) * this.resolution,
      ]),
    };
  }

  /** A fetch-compatible handler covering the endpoints the client uses. */
  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    this.requestLog.push({ method, path });
    const body = init?.body ? JSON.parse(String(init.body)) : {};

    const respond = (status: number, doc: unknown) =>
      new Response(JSON.stringify(doc), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (method === "POST" && path === "/v1/sample") {
      const id = `s${this.counter++}`;
      this.sessions.set(id, this.makeScene(body.seed ?? this.counter));
      return respond(200, this.payload(id));
    }
    const editMatch = path.match(/^\/v1\/session\/([^/]+)\/edit$/);
    if (method === "POST" && editMatch) {
      const id = editMatch[1];
      const scene = this.sessions.get(id);
      if (!scene) return respond(404, { detail: "unknown session" });
      try {
        let next = scene;
        for (const op of body.ops as EditOp[]) next = applyOp(next, op);
        this.sessions.set(id, next);
      } catch (err) {
        return respond(422, { detail: String(err) });
      }
      return respond(200, this.payload(id));
    }
    const swapMatch = path.match(/^\/v1\/session\/([^/]+)\/swap$/);
    if (method === "POST" && swapMatch) {
      const id = swapMatch[1];
      const scene = this.sessions.get(id);
      const source = this.sessions.get(body.source_session);
      if (!scene || !source) return respond(404, { detail: "unknown session" });
      let next = cloneScene(scene);
      for (const i of (body.indices ?? []) as number[]) {
        next.w_per_kp[i] = [...source.w_per_kp[i]];
      }
      if (body.background) next.w_bg = [...source.w_bg];
      this.sessions.set(id, next);
      return respond(200, this.payload(id));
    }
    const getMatch = path.match(/^\/v1\/session\/([^/]+)$/);
    if (method === "GET" && getMatch) {
      const scene = this.sessions.get(getMatch[1]);
      if (!scene) return respond(404, { detail: "unknown session" });
      return respond(200, { scene_state: cloneScene(scene) });
    }
    if (method === "DELETE" && getMatch) {
      if (!this.sessions.delete(getMatch[1])) return respond(404, { detail: "unknown" });
      return new Response(null, { status: 204 });
    }
    return respond(404, { detail: `no route ${method} ${path}` });
  };
}
