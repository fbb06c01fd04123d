import { describe, expect, it } from "vitest";
import { boxFromDrag } from "../src/boxes.js";
import { View, imageToScreen } from "../src/transform.js";

const IMG_W = 224;
const IMG_H = 224;

describe("boxFromDrag", () => {
  it("maps a zoomed drag back to original-image pixels", () => {
    const view: View = { zoom: 2, panX: 0, panY: 0 };
    const box = boxFromDrag(view, { x: 0, y: 0 }, { x: 100, y: 100 }, IMG_W, IMG_H);
    expect(box).toEqual({ x: 0, y: 0, w: 50, h: 50 });
  });

  it("accounts for pan offsets", () => {
    const view: View = { zoom: 1, panX: 40, panY: -10 };
    const box = boxFromDrag(view, { x: 50, y: 10 }, { x: 90, y: 60 }, IMG_W, IMG_H);
    expect(box).toEqual({ x: 10, y: 20, w: 40, h: 50 });
  });

  it("normalizes drags in any direction", () => {
    const view: View = { zoom: 1, panX: 0, panY: 0 };
    const down = boxFromDrag(view, { x: 20, y: 30 }, { x: 80, y: 90 }, IMG_W, IMG_H);
    const up = boxFromDrag(view, { x: 80, y: 90 }, { x: 20, y: 30 }, IMG_W, IMG_H);
    expect(up).toEqual(down);
  });

  it("discards zero-area clicks", () => {
    const view: View = { zoom: 1, panX: 0, panY: 0 };
    expect(boxFromDrag(view, { x: 50, y: 50 }, { x: 50, y: 50 }, IMG_W, IMG_H)).toBeNull();
  });

  it("discards drags that collapse below one pixel at high zoom", () => {
    const view: View = { zoom: 4, panX: 0, panY: 0 };
    expect(boxFromDrag(view, { x: 0, y: 0 }, { x: 1, y: 1 }, IMG_W, IMG_H)).toBeNull();
    expect(boxFromDrag(view, { x: 0, y: 0 }, { x: 4, y: 4 }, IMG_W, IMG_H))
      .toEqual({ x: 0, y: 0, w: 1, h: 1 });
  });

  it("clamps boxes to the image bounds", () => {
    const view: View = { zoom: 1, panX: 0, panY: 0 };
    const box = boxFromDrag(view, { x: -35, y: -8 }, { x: 500, y: 400 }, IMG_W, IMG_H);
    expect(box).toEqual({ x: 0, y: 0, w: IMG_W, h: IMG_H });
  });

  it("returns null for drags entirely outside the image", () => {
    const view: View = { zoom: 1, panX: 0, panY: 0 };
    expect(boxFromDrag(view, { x: 300, y: 300 }, { x: 400, y: 380 }, IMG_W, IMG_H)).toBeNull();
  });

  it("commits identical boxes for the same region dragged at different zooms", () => {
    const target = { x: 30, y: 40, w: 25, h: 60 };
    for (const view of [
      { zoom: 0.5, panX: 12, panY: 7 },
      { zoom: 1, panX: 0, panY: 0 },
      { zoom: 2.5, panX: -100, panY: 33 },
      { zoom: 4, panX: 5.5, panY: -20 },
    ] as View[]) {
      const start = imageToScreen(view, { x: target.x, y: target.y });
      const end = imageToScreen(view, { x: target.x + target.w, y: target.y + target.h });
      expect(boxFromDrag(view, start, end, IMG_W, IMG_H)).toEqual(target);
    }
  });
});
