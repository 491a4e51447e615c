/**
 * Overlay geometry is a pure scaling of server-provided pixel coordinates:
 * no 3D math happens client-side.
 */

export interface ScaledRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface ScaledSegment {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function scaleFactor(
  imageW: number,
  imageH: number,
  viewW: number,
  viewH: number,
): number {
  if (imageW <= 0 || imageH <= 0) return 1;
  return Math.min(viewW / imageW, viewH / imageH);
}

export function scaleRect(box: number[], s: number): ScaledRect {
  const [xMin, yMin, xMax, yMax] = box;
  return { x: xMin * s, y: yMin * s, w: (xMax - xMin) * s, h: (yMax - yMin) * s };
}

export function scaleSegment(seg: number[], s: number): ScaledSegment {
  const [x0, y0, x1, y1] = seg;
  return { x0: x0 * s, y0: y0 * s, x1: x1 * s, y1: y1 * s };
}

/** Clamp a scaled rect into the scaled image bounds (overlays never escape). */
export function clampRect(rect: ScaledRect, viewW: number, viewH: number): ScaledRect {
  const x = Math.max(0, Math.min(rect.x, viewW));
  const y = Math.max(0, Math.min(rect.y, viewH));
  return {
    x,
    y,
    w: Math.max(0, Math.min(rect.w, viewW - x)),
    h: Math.max(0, Math.min(rect.h, viewH - y)),
  };
}
