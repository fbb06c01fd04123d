import { Box } from "./api.js";
import { Point, View, screenToImage, snap } from "./transform.js";

/** Map a screen-space drag to a committed box in original-image pixels.
 *
 * Both endpoints go through the inverse view transform, corners snap to
 * the integer pixel grid, and the box is clamped to the image. Drags that
 * collapse below one pixel in either direction yield null.
 */
export function boxFromDrag(view: View, start: Point, end: Point,
                            imageW: number, imageH: number): Box | null {
  const a = snap(screenToImage(view, start));
  const b = snap(screenToImage(view, end));
  const x0 = Math.max(0, Math.min(a.x, b.x));
  const y0 = Math.max(0, Math.min(a.y, b.y));
  const x1 = Math.min(imageW, Math.max(a.x, b.x));
  const y1 = Math.min(imageH, Math.max(a.y, b.y));
  if (x1 - x0 < 1 || y1 - y0 < 1) return null;
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}
