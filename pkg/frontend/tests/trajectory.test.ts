import { describe, expect, it } from "vitest";

import {
  applyDrag,
  applyRotate,
  applyScale,
  interpolate,
  keyframesFromDragPath,
  upsertKeyframe,
  withAnchors,
} from "../src/trajectory.js";

const kf = (frame: number, fields: Record<string, number> = {}) => ({
  frame,
  dx: 0,
  dy: 0,
  rotation: 0,
  log_scale: 0,
  ...fields,
});

describe("interpolate", () => {
  it("is linear in translation between keyframes", () => {
    const samples = interpolate([kf(0), kf(10, { dx: 10 })], 11);
    samples.forEach((s, f) => expect(s.dx).toBeCloseTo(f, 10));
  });

  it("hits the rotation midpoint", () => {
    const samples = interpolate([kf(0), kf(4, { rotation: Math.PI / 2 })], 5);
    expect(samples[2].rotation).toBeCloseTo(Math.PI / 4, 10);
  });

  it("is geometric in scale", () => {
    const samples = interpolate([kf(0), kf(2, { log_scale: Math.log(4) })], 3);
    expect(Math.exp(samples[1].log_scale)).toBeCloseTo(2, 10);
  });
});

describe("gesture editing", () => {
  it("a drag path yields two monotone keyframes", () => {
    const kfs = keyframesFromDragPath(
      [
        [10, 10],
        [14, 11],
        [22, 15],
      ],
      16,
    );
    expect(kfs.length).toBe(2);
    expect(kfs[0].frame).toBe(0);
    expect(kfs[1].frame).toBe(15);
    expect(kfs[1].dx).toBe(12);
    expect(kfs[1].dy).toBe(5);
  });

  it("scale handle at 2x stores ln 2", () => {
    const kfs = applyScale([kf(0), kf(7)], 7, 2.0);
    const last = kfs.find((k) => k.frame === 7)!;
    expect(last.log_scale).toBeCloseTo(Math.log(2), 12);
  });

  it("rejects non-positive scale", () => {
    expect(() => applyScale([kf(0)], 3, 0)).toThrow(/positive/);
  });

  it("upsert keeps frames strictly increasing", () => {
    let kfs = [kf(0), kf(15)];
    kfs = applyDrag(kfs, 7, 4, -2);
    kfs = applyRotate(kfs, 3, 0.5);
    const frames = kfs.map((k) => k.frame);
    expect(frames).toEqual([...frames].sort((a, b) => a - b));
    expect(new Set(frames).size).toBe(frames.length);
  });

  it("upsert merges fields into an existing keyframe", () => {
    let kfs = [kf(0), kf(9, { dx: 5 })];
    kfs = upsertKeyframe(kfs, 9, { rotation: 1.0 });
    const last = kfs.find((k) => k.frame === 9)!;
    expect(last.dx).toBe(5);
    expect(last.rotation).toBe(1.0);
  });

  it("withAnchors adds frame-0 and final-frame anchors", () => {
    const kfs = withAnchors([kf(4, { dx: 3 })], 12);
    expect(kfs[0].frame).toBe(0);
    expect(kfs[kfs.length - 1].frame).toBe(11);
    // trailing anchor carries the last pose forward
    expect(kfs[kfs.length - 1].dx).toBe(3);
  });
});
