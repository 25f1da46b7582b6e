/**
 * Run-length mask codec matching the service wire format: row-major runs
 * alternating zeros/ones, always starting with a zero-run count.
 */

export interface RleMask {
  height: number;
  width: number;
  runs: number[];
}

export function encodeMask(mask: Uint8Array, height: number, width: number): RleMask {
  if (mask.length !== height * width) {
    throw new Error(`mask length ${mask.length} != ${height}x${width}`);
  }
  const runs: number[] = [];
  let value = 0;
  let count = 0;
  for (let i = 0; i < mask.length; i++) {
    const bit = mask[i] ? 1 : 0;
    if (bit === value) {
      count++;
    } else {
      runs.push(count);
      value = bit;
      count = 1;
    }
  }
  runs.push(count);
  return { height, width, runs };
}

export function decodeMask(rle: RleMask): Uint8Array {
  const total = rle.height * rle.width;
  const sum = rle.runs.reduce((a, b) => a + b, 0);
  if (sum !== total) {
    throw new Error(`runs sum ${sum} != ${total}`);
  }
  const mask = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.runs) {
    if (run < 0 || !Number.isInteger(run)) {
      throw new Error("runs must be nonnegative integers");
    }
    if (value) mask.fill(1, pos, pos + run);
    pos += run;
    value = value ? 0 : 1;
  }
  return mask;
}

export function countOnes(mask: Uint8Array): number {
  let n = 0;
  for (let i = 0; i < mask.length; i++) if (mask[i]) n++;
  return n;
}
