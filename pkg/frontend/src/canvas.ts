/**
 * Pointer-drag geometry capture. Client pixels convert to original-image
 * pixels immediately, so stored coordinates are zoom-independent.
 */

import type { GeometryKind } from './types.js';

export interface CanvasTransform {
  /** on-screen size of the rendered image */
  clientWidth: number;
  clientHeight: number;
  /** underlying image resolution */
  imageWidth: number;
  imageHeight: number;
}

export interface DragState {
  kind: GeometryKind;
  start: [number, number];
  current: [number, number];
}

export function toImageCoords(
  transform: CanvasTransform, clientX: number, clientY: number,
): [number, number] {
  const x = (clientX / transform.clientWidth) * transform.imageWidth;
  const y = (clientY / transform.clientHeight) * transform.imageHeight;
  return [x, y];
}

export function beginDrag(
  transform: CanvasTransform, kind: GeometryKind, clientX: number, clientY: number,
): DragState {
  const point = toImageCoords(transform, clientX, clientY);
  return { kind, start: point, current: point };
}

export function moveDrag(
  transform: CanvasTransform, drag: DragState, clientX: number, clientY: number,
): DragState {
  return { ...drag, current: toImageCoords(transform, clientX, clientY) };
}

/**
 * Finish a drag. Boxes record the two opposite corners; circles record the
 * center (drag start) and the rim point under the pointer.
 */
export function endDrag(drag: DragState): [number, number][] {
  return [drag.start, drag.current];
}

/** Preview rectangle in client pixels for live rendering. */
export function previewRect(
  transform: CanvasTransform, drag: DragState,
): { left: number; top: number; width: number; height: number } {
  const sx = (drag.start[0] / transform.imageWidth) * transform.clientWidth;
  const sy = (drag.start[1] / transform.imageHeight) * transform.clientHeight;
  const cx = (drag.current[0] / transform.imageWidth) * transform.clientWidth;
  const cy = (drag.current[1] / transform.imageHeight) * transform.clientHeight;
  return {
    left: Math.min(sx, cx),
    top: Math.min(sy, cy),
    width: Math.abs(cx - sx),
    height: Math.abs(cy - sy),
  };
}
