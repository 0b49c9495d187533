// Wire-format types mirroring the edit service's JSON documents.

export type SceneState = {
  k: number;
  coords: [number, number][];
  active: boolean[];
  w_per_kp: number[][];
  w_bg: number[];
  w_global: number[] | null;
  slots: number[];
};

export type EditOp =
  | { kind: "move"; indices: number[]; delta: [number, number] }
  | { kind: "scale_about_centroid"; factor: number; indices?: number[] }
  | { kind: "interpolate_pose"; coords: [number, number][]; t: number }
  | { kind: "swap_embeddings"; indices: number[]; embeddings: number[][] }
  | {
      kind: "interpolate_embeddings";
      indices: number[];
      embeddings: number[][];
      t: number;
    }
  | { kind: "swap_background"; w_bg: number[] }
  | {
      kind: "add_part";
      coord: [number, number];
      source_index?: number;
      embedding?: number[];
      slot?: number;
    }
  | { kind: "remove_part"; index: number }
  | { kind: "restore_part"; index: number };

export type SampleResponse = {
  session_id: string;
  scene_state: SceneState;
  image_png_b64: string;
  keypoints_px: [number, number][];
};

export type EditResponse = {
  session_id: string;
  scene_state: SceneState;
  image_png_b64: string;
  keypoints_px: [number, number][];
};

export function cloneScene(s: SceneState): SceneState {
  return JSON.parse(JSON.stringify(s)) as SceneState;
}
