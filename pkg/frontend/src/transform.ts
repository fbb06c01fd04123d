/** Screen to image coordinate mapping for the zoomable viewer.
 *
 * Boxes live in original-image pixel coordinates; zoom and pan only change
 * how they are projected onto the screen. snap() recovers integer pixel
 * coordinates exactly after a round trip through any zoom in
 * [ZOOM_MIN, ZOOM_MAX], so committed boxes never drift when the view moves.
 */

export const ZOOM_MIN = 0.5;
export const ZOOM_MAX = 4;

export interface Point {
  x: number;
  y: number;
}

export interface View {
  zoom: number;
  panX: number;
  panY: number;
}

export function clampZoom(z: number): number {
  return Math.min(ZOOM_MAX, Math.max(ZOOM_MIN, z));
}

export function imageToScreen(view: View, p: Point): Point {
  return { x: p.x * view.zoom + view.panX, y: p.y * view.zoom + view.panY };
}

export function screenToImage(view: View, p: Point): Point {
  return { x: (p.x - view.panX) / view.zoom, y: (p.y - view.panY) / view.zoom };
}

export function snap(p: Point): Point {
  return { x: Math.round(p.x), y: Math.round(p.y) };
}

/** Rescale about a fixed screen point so the pixel under the cursor stays put. */
export function zoomAt(view: View, factor: number, center: Point): View {
  const zoom = clampZoom(view.zoom * factor);
  const scale = zoom / view.zoom;
  return {
    zoom,
    panX: center.x - (center.x - view.panX) * scale,
    panY: center.y - (center.y - view.panY) * scale,
  };
}

export function panBy(view: View, dx: number, dy: number): View {
  return { zoom: view.zoom, panX: view.panX + dx, panY: view.panY + dy };
}

/** Initial view: image centered in the viewport, zoomed to fit. */
export function fitView(imageW: number, imageH: number, viewW: number, viewH: number): View {
  const zoom = clampZoom(Math.min(viewW / imageW, viewH / imageH));
  return {
    zoom,
    panX: (viewW - imageW * zoom) / 2,
    panY: (viewH - imageH * zoom) / 2,
  };
}
