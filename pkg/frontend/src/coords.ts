// Pixel <-> normalized coordinate mapping.
//
// The server reports keypoints in continuous pixel coordinates via
// px = ((coord + 1) / 2) * R; this module is its exact inverse pair, scaled
// to the on-screen view size (the canvas may display the image enlarged).

export class CoordinateMapper {
  constructor(
    readonly imageResolution: number,
    readonly viewSize: number,
  ) {}

  /** Normalized [-1, 1] -> view pixels. */
  toView(coord: number): number {
    return ((coord + 1) / 2) * this.viewSize;
  }

  /** View pixels -> normalized [-1, 1]. */
  toNorm(px: number): number {
    return (2 * px) / this.viewSize - 1;
  }

  /** A pixel displacement on the view, as a normalized displacement. */
  deltaToNorm(dpx: number): number {
    return (2 * dpx) / this.viewSize;
  }

  pointToView([x, y]: [number, number]): [number, number] {
    return [this.toView(x), this.toView(y)];
  }

  pointToNorm([px, py]: [number, number]): [number, number] {
    return [this.toNorm(px), this.toNorm(py)];
  }

  /** Server pixel coordinates (image resolution) -> view pixels. */
  serverPxToView(px: number): number {
    return (px / this.imageResolution) * this.viewSize;
  }

  clampNorm(v: number): number {
    return Math.min(1, Math.max(-1, v));
  }
}
