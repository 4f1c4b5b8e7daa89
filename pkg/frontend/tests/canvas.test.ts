import { describe, expect, it } from 'vitest';

import { beginDrag, endDrag, moveDrag, previewRect, toImageCoords } from '../src/canvas.js';
import type { CanvasTransform } from '../src/canvas.js';

const zoomed: CanvasTransform = { clientWidth: 512, clientHeight: 512, imageWidth: 64, imageHeight: 64 };
const native: CanvasTransform = { clientWidth: 64, clientHeight: 64, imageWidth: 64, imageHeight: 64 };

describe('canvas coordinate mapping', () => {
  it('converts client pixels to image pixels under zoom', () => {
    expect(toImageCoords(zoomed, 256, 128)).toEqual([32, 16]);
    expect(toImageCoords(native, 32, 16)).toEqual([32, 16]);
  });

  it('stored coordinates are zoom-independent', () => {
    // the same physical gesture at 8x zoom and at native resolution
    const dragZoomed = moveDrag(zoomed, beginDrag(zoomed, 'box', 80, 80), 240, 320);
    const dragNative = moveDrag(native, beginDrag(native, 'box', 10, 10), 30, 40);
    expect(endDrag(dragZoomed)).toEqual(endDrag(dragNative));
  });

  it('circle drags record center then rim point', () => {
    const drag = moveDrag(zoomed, beginDrag(zoomed, 'circle', 256, 256), 320, 256);
    const [center, rim] = endDrag(drag);
    expect(center).toEqual([32, 32]);
    expect(rim).toEqual([40, 32]);
  });

  it('preview rectangle normalizes corner order', () => {
    const drag = moveDrag(zoomed, beginDrag(zoomed, 'box', 400, 300), 200, 100);
    const rect = previewRect(zoomed, drag);
    expect(rect.left).toBe(200);
    expect(rect.top).toBe(100);
    expect(rect.width).toBe(200);
    expect(rect.height).toBe(200);
  });
});
