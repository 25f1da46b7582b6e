/**
 * Binary mask painting: circular brush strokes, erase, invert, and fill,
 * with an undo/redo stack of full-mask snapshots (canvases are small).
 * Strokes outside the canvas clip silently.
 */

export class MaskLayer {
  readonly height: number;
  readonly width: number;
  private mask: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private redoStack: Uint8Array[] = [];

  constructor(height: number, width: number, initial?: Uint8Array) {
    this.height = height;
    this.width = width;
    this.mask = initial ? Uint8Array.from(initial) : new Uint8Array(height * width);
    if (this.mask.length !== height * width) {
      throw new Error("initial mask has wrong size");
    }
  }

  get data(): Uint8Array {
    return this.mask;
  }

  at(x: number, y: number): boolean {
    return !!this.mask[y * this.width + x];
  }

  private snapshot(): void {
    this.undoStack.push(Uint8Array.from(this.mask));
    this.redoStack.length = 0;
  }

  paintDot(cx: number, cy: number, radius: number, value: boolean): void {
    this.snapshot();
    this.stampDot(cx, cy, radius, value);
  }

  /** Stroke as a series of stamped dots along a polyline; one undo entry. */
  paintStroke(points: Array<[number, number]>, radius: number, value: boolean): void {
    this.snapshot();
    for (const [x, y] of points) this.stampDot(x, y, radius, value);
  }

  private stampDot(cx: number, cy: number, radius: number, value: boolean): void {
    const r2 = radius * radius;
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if ((x - cx) ** 2 + (y - cy) ** 2 <= r2) {
          this.mask[y * this.width + x] = value ? 1 : 0;
        }
      }
    }
  }

  fillAll(value: boolean): void {
    this.snapshot();
    this.mask.fill(value ? 1 : 0);
  }

  invert(): void {
    this.snapshot();
    for (let i = 0; i < this.mask.length; i++) this.mask[i] = this.mask[i] ? 0 : 1;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.mask);
    this.mask = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.mask);
    this.mask = next;
    return true;
  }

  isEmpty(): boolean {
    return this.mask.every((v) => !v);
  }
}
