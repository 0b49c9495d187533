"""Editing algebra over scene states.

A SceneState bundles everything the renderer needs for one sample: keypoint
coordinates, per-keypoint embeddings, the background embedding, and a
per-keypoint active flag. Every operation is pure (returns a fresh state) and
works in float64 so round-trip edits cancel to ~1e-16. Coordinates are
clamped to [-1, 1] after every edit; clamping, not wrapping, since keypoints
beyond the frame are meaningless.

The JSON wire format (used by the HTTP service and the CLI) is::

    {"k": int, "coords": [[x, y], ...], "active": [bool, ...],
     "w_per_kp": [[...], ...], "w_bg": [...], "w_global": [...] | null,
     "slots": [int, ...]}

"slots" maps each part to one of the model's training-time style channels so
that scenes enlarged by add_part stay renderable: convolution widths are
fixed, so extra parts fold into the channel of the part they were duplicated
from. An omitted "slots" key means the identity mapping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SceneState:
    coords: np.ndarray  # (K, 2) float64, (x, y) in [-1, 1]
    active: np.ndarray  # (K,) bool
    w_per_kp: np.ndarray  # (K, D) float64
    w_bg: np.ndarray  # (D,) float64
    w_global: np.ndarray | None = None  # (D,) float64, provenance only
    slots: np.ndarray | None = None  # (K,) int style-channel assignment

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.active = np.asarray(self.active, dtype=bool)
        self.w_per_kp = np.asarray(self.w_per_kp, dtype=np.float64)
        self.w_bg = np.asarray(self.w_bg, dtype=np.float64)
        if self.w_global is not None:
            self.w_global = np.asarray(self.w_global, dtype=np.float64)
        k = self.coords.shape[0]
        if self.coords.shape != (k, 2):
            raise ValueError(f"coords must be (K, 2), got {self.coords.shape}")
        if self.active.shape != (k,) or self.w_per_kp.shape[0] != k:
            raise ValueError("coords, active and w_per_kp must agree on K")
        if self.slots is None:
            self.slots = np.arange(k)
        self.slots = np.asarray(self.slots, dtype=np.int64)
        if self.slots.shape != (k,):
            raise ValueError("slots must have one entry per part")

    @property
    def k(self) -> int:
        return self.coords.shape[0]

    def copy(self) -> "SceneState":
        return SceneState(
            self.coords.copy(),
            self.active.copy(),
            self.w_per_kp.copy(),
            self.w_bg.copy(),
            None if self.w_global is None else self.w_global.copy(),
            self.slots.copy(),
        )


def scene_to_json(state: SceneState) -> dict:
    return {
        "k": state.k,
        "coords": state.coords.tolist(),
        "active": state.active.tolist(),
        "w_per_kp": state.w_per_kp.tolist(),
        "w_bg": state.w_bg.tolist(),
        "w_global": None if state.w_global is None else state.w_global.tolist(),
        "slots": state.slots.tolist(),
    }


def scene_from_json(doc: dict) -> SceneState:
    return SceneState(
        coords=np.array(doc["coords"], dtype=np.float64).reshape(doc["k"], 2),
        active=np.array(doc["active"], dtype=bool),
        w_per_kp=np.array(doc["w_per_kp"], dtype=np.float64).reshape(doc["k"], -1),
        w_bg=np.array(doc["w_bg"], dtype=np.float64),
        w_global=None if doc.get("w_global") is None else np.array(doc["w_global"], dtype=np.float64),
        slots=doc.get("slots"),
    )


def _check_indices(state: SceneState, indices, require_active: bool = True):
    indices = list(indices)
    for i in indices:
        if not 0 <= i < state.k:
            raise IndexError(f"keypoint index {i} out of range for K={state.k}")
        if require_active and not state.active[i]:
            raise ValueError(f"keypoint {i} is not active")
    return indices


def move_keypoints(state: SceneState, indices, delta) -> SceneState:
    indices = _check_indices(state, indices)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (2,):
        raise ValueError(f"delta must be a 2-vector, got shape {delta.shape}")
    out = state.copy()
    out.coords[indices] = np.clip(out.coords[indices] + delta, -1.0, 1.0)
    return out


def scale_about_centroid(state: SceneState, factor: float, indices=None) -> SceneState:
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    if indices is None:
        indices = [i for i in range(state.k) if state.active[i]]
    indices = _check_indices(state, indices)
    if not indices:
        raise ValueError("need at least one active keypoint to scale")
    out = state.copy()
    centroid = out.coords[indices].mean(axis=0)
    out.coords[indices] = np.clip(
        centroid + factor * (out.coords[indices] - centroid), -1.0, 1.0
    )
    return out


def interpolate_pose(state_a: SceneState, state_b: SceneState, t: float) -> SceneState:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if state_a.k != state_b.k or not np.array_equal(state_a.active, state_b.active):
        raise ValueError("pose interpolation needs matching K and active masks")
    out = state_a.copy()
    out.coords = np.clip((1.0 - t) * state_a.coords + t * state_b.coords, -1.0, 1.0)
    return out


def swap_embeddings(target: SceneState, source: SceneState, indices) -> SceneState:
    indices = _check_indices(target, indices, require_active=False)
    _check_indices(source, indices, require_active=False)
    out = target.copy()
    out.w_per_kp[indices] = source.w_per_kp[indices]
    return out


def interpolate_embeddings(
    target: SceneState, source: SceneState, indices, t: float
) -> SceneState:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    indices = _check_indices(target, indices, require_active=False)
    _check_indices(source, indices, require_active=False)
    out = target.copy()
    out.w_per_kp[indices] = (1.0 - t) * target.w_per_kp[indices] + t * source.w_per_kp[indices]
    return out


def swap_background(target: SceneState, source: SceneState) -> SceneState:
    out = target.copy()
    out.w_bg = source.w_bg.copy()
    return out


def add_part(
    state: SceneState,
    coord,
    source_index: int | None = None,
    embedding=None,
    slot: int | None = None,
) -> SceneState:
    coord = np.asarray(coord, dtype=np.float64)
    if coord.shape != (2,):
        raise ValueError("coord must be a 2-vector")
    if np.abs(coord).max() > 1.0:
        raise ValueError(f"coord {coord.tolist()} outside [-1, 1]^2")
    if (source_index is None) == (embedding is None):
        raise ValueError("provide exactly one of source_index or embedding")
    if source_index is not None:
        _check_indices(state, [source_index], require_active=False)
        row = state.w_per_kp[source_index].copy()
        new_slot = state.slots[source_index] if slot is None else slot
    else:
        row = np.asarray(embedding, dtype=np.float64)
        if row.shape != (state.w_per_kp.shape[1],):
            raise ValueError("embedding dimension mismatch")
        new_slot = 0 if slot is None else slot
    return SceneState(
        coords=np.concatenate([state.coords, coord[None]], axis=0),
        active=np.concatenate([state.active, [True]]),
        w_per_kp=np.concatenate([state.w_per_kp, row[None]], axis=0),
        w_bg=state.w_bg.copy(),
        w_global=None if state.w_global is None else state.w_global.copy(),
        slots=np.concatenate([state.slots, [new_slot]]),
    )


def remove_part(state: SceneState, index: int) -> SceneState:
    _check_indices(state, [index])
    out = state.copy()
    out.active[index] = False
    return out


def restore_part(state: SceneState, index: int) -> SceneState:
    """Reactivate a removed part; the exact inverse of remove_part, so that
    client-side undo stacks can be expressed purely in wire ops."""
    _check_indices(state, [index], require_active=False)
    if state.active[index]:
        raise ValueError(f"keypoint {index} is already active")
    out = state.copy()
    out.active[index] = True
    return out


def apply_edit_op(state: SceneState, op: dict) -> SceneState:
    """Apply one wire-format edit op; raises ValueError on malformed payloads.

    Ops that reference another scene (swap/interpolate sources, pose targets)
    carry the needed rows inline, so a single state plus an op list fully
    describes an edit session.
    """
    if not isinstance(op, dict) or "kind" not in op:
        raise ValueError("edit op must be an object with a 'kind' field")
    kind = op["kind"]
    try:
        if kind == "move":
            return move_keypoints(state, op["indices"], op["delta"])
        if kind == "scale_about_centroid":
            return scale_about_centroid(state, op["factor"], op.get("indices"))
        if kind == "interpolate_pose":
            other = state.copy()
            other.coords = np.asarray(op["coords"], dtype=np.float64).reshape(state.k, 2)
            return interpolate_pose(state, other, op["t"])
        if kind == "swap_embeddings":
            other = state.copy()
            rows = np.asarray(op["embeddings"], dtype=np.float64)
            other.w_per_kp = other.w_per_kp.copy()
            other.w_per_kp[list(op["indices"])] = rows
            return swap_embeddings(state, other, op["indices"])
        if kind == "interpolate_embeddings":
            other = state.copy()
            rows = np.asarray(op["embeddings"], dtype=np.float64)
            other.w_per_kp = other.w_per_kp.copy()
            other.w_per_kp[list(op["indices"])] = rows
            return interpolate_embeddings(state, other, op["indices"], op["t"])
        if kind == "swap_background":
            other = state.copy()
            other.w_bg = np.asarray(op["w_bg"], dtype=np.float64)
            return swap_background(state, other)
        if kind == "add_part":
            return add_part(
                state,
                op["coord"],
                op.get("source_index"),
                op.get("embedding"),
                op.get("slot"),
            )
        if kind == "remove_part":
            return remove_part(state, op["index"])
        if kind == "restore_part":
            return restore_part(state, op["index"])
    except KeyError as exc:
        raise ValueError(f"edit op {kind!r} missing field {exc}") from exc
    raise ValueError(f"unknown edit op kind {kind!r}")


def apply_edit_ops(state: SceneState, ops: list[dict]) -> SceneState:
    """Apply ops in order; all-or-nothing (the input state is never mutated)."""
    for op in ops:
        state = apply_edit_op(state, op)
    return state
