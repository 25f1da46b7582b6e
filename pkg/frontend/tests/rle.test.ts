import { describe, expect, it } from "vitest";

import { decodeMask, encodeMask, countOnes } from "../src/rle.js";

function randomMask(n: number, seedBase: number): Uint8Array {
  const mask = new Uint8Array(n);
  let state = seedBase || 1;
  for (let i = 0; i < n; i++) {
    state = (state * 1103515245 + 12345) & 0x7fffffff;
    mask[i] = state % 3 === 0 ? 1 : 0;
  }
  return mask;
}

describe("rle codec", () => {
  it("round-trips simple masks", () => {
    const mask = new Uint8Array(12);
    mask[3] = 1;
    mask[4] = 1;
    mask[11] = 1;
    const rle = encodeMask(mask, 3, 4);
    expect(rle.runs[0]).toBe(3); // leading zero run
    expect(decodeMask(rle)).toEqual(mask);
  });

  it("starts with a zero-run even when the mask starts with ones", () => {
    const mask = new Uint8Array(4).fill(1);
    const rle = encodeMask(mask, 2, 2);
    expect(rle.runs[0]).toBe(0);
    expect(decodeMask(rle)).toEqual(mask);
  });

  it("round-trips 50 random masks", () => {
    for (let seed = 1; seed <= 50; seed++) {
      const h = 1 + (seed % 9);
      const w = 1 + ((seed * 7) % 11);
      const mask = randomMask(h * w, seed);
      const back = decodeMask(encodeMask(mask, h, w));
      expect(back).toEqual(mask);
      expect(countOnes(back)).toBe(countOnes(mask));
    }
  });

  it("rejects runs that do not cover the mask", () => {
    expect(() => decodeMask({ height: 2, width: 2, runs: [1] })).toThrow(/sum/);
  });

  it("rejects wrong-size input", () => {
    expect(() => encodeMask(new Uint8Array(5), 2, 2)).toThrow(/length/);
  });
});
