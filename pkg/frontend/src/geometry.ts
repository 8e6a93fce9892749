/** Bounding-box geometry for the canvas editor: pure and side-effect free. */

export interface BBox {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export const MIN_SIZE = 8;

export type Handle = "nw" | "ne" | "sw" | "se";

export function width(b: BBox): number {
  return b.x1 - b.x0;
}

export function height(b: BBox): number {
  return b.y1 - b.y0;
}

/** Reorder corners so x0 <= x1 and y0 <= y1. */
export function normalize(b: BBox): BBox {
  return {
    x0: Math.min(b.x0, b.x1),
    y0: Math.min(b.y0, b.y1),
    x1: Math.max(b.x0, b.x1),
    y1: Math.max(b.y0, b.y1),
  };
}

/** Shift the box so it lies inside a w-by-h canvas, preserving its size when
 * possible; oversized boxes are clipped to the canvas. */
export function clampBBox(b: BBox, w: number, h: number): BBox {
  let { x0, y0, x1, y1 } = normalize(b);
  if (x1 - x0 > w) {
    x0 = 0;
    x1 = w;
  } else if (x0 < 0) {
    x1 -= x0;
    x0 = 0;
  } else if (x1 > w) {
    x0 -= x1 - w;
    x1 = w;
  }
  if (y1 - y0 > h) {
    y0 = 0;
    y1 = h;
  } else if (y0 < 0) {
    y1 -= y0;
    y0 = 0;
  } else if (y1 > h) {
    y0 -= y1 - h;
    y1 = h;
  }
  return { x0, y0, x1, y1 };
}

/** Translate by (dx, dy) and clamp inside the canvas. */
export function moveBBox(b: BBox, dx: number, dy: number, w: number, h: number): BBox {
  return clampBBox({ x0: b.x0 + dx, y0: b.y0 + dy, x1: b.x1 + dx, y1: b.y1 + dy }, w, h);
}

export interface ResizeOptions {
  canvasW: number;
  canvasH: number;
  aspectLock?: boolean;
  minSize?: number;
}

/** Drag one corner by (dx, dy). The opposite corner stays fixed; shrinking
 * below minSize-by-minSize is blocked, and with aspectLock the box keeps its
 * starting aspect ratio. */
export function resizeBBox(b: BBox, handle: Handle, dx: number, dy: number,
                           opts: ResizeOptions): BBox {
  const minSize = opts.minSize ?? MIN_SIZE;
  const sx = handle === "nw" || handle === "sw" ? -1 : 1; // dragging right grows east handles
  const sy = handle === "nw" || handle === "ne" ? -1 : 1;
  let newW = width(b) + sx * dx;
  let newH = height(b) + sy * dy;
  if (opts.aspectLock) {
    const ratio = width(b) / height(b);
    // follow the dominant axis of the drag
    if (Math.abs(dx) >= Math.abs(dy)) {
      newH = newW / ratio;
    } else {
      newW = newH * ratio;
    }
  }
  newW = Math.round(Math.max(minSize, newW));
  newH = Math.round(Math.max(minSize, newH));

  let out: BBox;
  switch (handle) {
    case "se":
      out = { x0: b.x0, y0: b.y0, x1: b.x0 + newW, y1: b.y0 + newH };
      break;
    case "ne":
      out = { x0: b.x0, y0: b.y1 - newH, x1: b.x0 + newW, y1: b.y1 };
      break;
    case "sw":
      out = { x0: b.x1 - newW, y0: b.y0, x1: b.x1, y1: b.y0 + newH };
      break;
    case "nw":
      out = { x0: b.x1 - newW, y0: b.y1 - newH, x1: b.x1, y1: b.y1 };
      break;
  }
  return clampBBox(out, opts.canvasW, opts.canvasH);
}

/** The exact wire format sent to /api/harmonize. */
export function serializeBBox(b: BBox): [number, number, number, number] {
  return [Math.round(b.x0), Math.round(b.y0), Math.round(b.x1), Math.round(b.y1)];
}

export function sameBBox(a: BBox, b: BBox): boolean {
  return a.x0 === b.x0 && a.y0 === b.y0 && a.x1 === b.x1 && a.y1 === b.y1;
}
