/**
 * Keyframe editing and interpolation for the trajectory overlay.
 *
 * Gestures update or insert keyframes; interpolation is linear in
 * translation/rotation and linear in log-scale (geometric in scale),
 * matching the warp engine, so the overlay path and the server preview
 * agree.
 */

import { Keyframe } from "./schema.js";

export interface TransformSample {
  dx: number;
  dy: number;
  rotation: number;
  log_scale: number;
}

export function sortedByFrame(keyframes: Keyframe[]): Keyframe[] {
  return [...keyframes].sort((a, b) => a.frame - b.frame);
}

export function interpolate(keyframes: Keyframe[], frameCount: number): TransformSample[] {
  const kfs = sortedByFrame(keyframes);
  const out: TransformSample[] = [];
  let ki = 0;
  for (let f = 0; f < frameCount; f++) {
    while (ki + 1 < kfs.length && kfs[ki + 1].frame <= f) ki++;
    const a = kfs[ki];
    if (a.frame === f || ki + 1 >= kfs.length) {
      out.push({ dx: a.dx ?? 0, dy: a.dy ?? 0, rotation: a.rotation ?? 0, log_scale: a.log_scale ?? 0 });
      continue;
    }
    const b = kfs[ki + 1];
    const w = (f - a.frame) / (b.frame - a.frame);
    out.push({
      dx: (a.dx ?? 0) + w * ((b.dx ?? 0) - (a.dx ?? 0)),
      dy: (a.dy ?? 0) + w * ((b.dy ?? 0) - (a.dy ?? 0)),
      rotation: (a.rotation ?? 0) + w * ((b.rotation ?? 0) - (a.rotation ?? 0)),
      log_scale: (a.log_scale ?? 0) + w * ((b.log_scale ?? 0) - (a.log_scale ?? 0)),
    });
  }
  return out;
}

function blank(frame: number): Keyframe {
  return { frame, dx: 0, dy: 0, rotation: 0, log_scale: 0 };
}

/** Ensure anchor keyframes exist at frame 0 and frameCount-1. */
export function withAnchors(keyframes: Keyframe[], frameCount: number): Keyframe[] {
  const kfs = sortedByFrame(keyframes);
  if (!kfs.length || kfs[0].frame !== 0) kfs.unshift(blank(0));
  if (kfs[kfs.length - 1].frame !== frameCount - 1) {
    const last = kfs[kfs.length - 1];
    kfs.push({ ...last, frame: frameCount - 1 });
  }
  return kfs;
}

/** Upsert the keyframe at `frame`, merging the given fields. */
export function upsertKeyframe(
  keyframes: Keyframe[],
  frame: number,
  fields: Partial<Omit<Keyframe, "frame">>,
): Keyframe[] {
  const kfs = sortedByFrame(keyframes);
  const existing = kfs.findIndex((k) => k.frame === frame);
  if (existing >= 0) {
    kfs[existing] = { ...kfs[existing], ...fields };
  } else {
    const prev = [...kfs].reverse().find((k) => k.frame < frame) ?? blank(frame);
    kfs.push({ ...prev, ...fields, frame });
  }
  return sortedByFrame(kfs);
}

/** A drag gesture sets the translation of the keyframe at `frame`. */
export function applyDrag(
  keyframes: Keyframe[],
  frame: number,
  dx: number,
  dy: number,
): Keyframe[] {
  return upsertKeyframe(keyframes, frame, { dx, dy });
}

/** A rotation-handle gesture sets absolute rotation (radians). */
export function applyRotate(keyframes: Keyframe[], frame: number, rotation: number): Keyframe[] {
  return upsertKeyframe(keyframes, frame, { rotation });
}

/** A scale-handle gesture sets the scale factor (stored as log-scale). */
export function applyScale(keyframes: Keyframe[], frame: number, scale: number): Keyframe[] {
  if (!(scale > 0)) throw new Error("scale must be positive");
  return upsertKeyframe(keyframes, frame, { log_scale: Math.log(scale) });
}

/** From a freehand drag path (one point per pointer event), build two
 * keyframes: identity at frame 0 and the end displacement at the last
 * frame. */
export function keyframesFromDragPath(
  path: Array<[number, number]>,
  frameCount: number,
): Keyframe[] {
  if (path.length < 2) return [blank(0), blank(frameCount - 1)];
  const [x0, y0] = path[0];
  const [x1, y1] = path[path.length - 1];
  return [blank(0), { ...blank(frameCount - 1), dx: x1 - x0, dy: y1 - y0 }];
}
