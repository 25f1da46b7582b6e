/**
 * Motion-spec document schema and client-side validation.
 *
 * The rules here mirror the server's schema-level checks one-for-one, so a
 * document that passes `validateDocument` never bounces off the server for
 * schema reasons: nonempty mask, strictly increasing keyframes anchored at
 * frame 0 and F-1, identity first keyframe, finite values, sane scale.
 */

import { z } from "zod";
import { RleMask, decodeMask, countOnes } from "./rle.js";

export const keyframeSchema = z.object({
  frame: z.number().int().min(0),
  dx: z.number().finite().default(0),
  dy: z.number().finite().default(0),
  rotation: z.number().finite().default(0),
  log_scale: z.number().finite().default(0),
  gain: z.tuple([z.number(), z.number(), z.number()]).optional(),
  bias: z.tuple([z.number(), z.number(), z.number()]).optional(),
});

export const rleSchema = z.object({
  height: z.number().int().positive(),
  width: z.number().int().positive(),
  runs: z.array(z.number().int().nonnegative()),
});

export const regionSchema = z.object({
  mask: rleSchema,
  keyframes: z.array(keyframeSchema).min(1),
});

export const documentSchema = z.object({
  version: z.literal(1),
  image: z.string(),
  frame_count: z.number().int().min(1),
  regions: z.array(regionSchema).min(1),
});

export type Keyframe = z.infer<typeof keyframeSchema>;
export type Region = z.infer<typeof regionSchema>;
export type MotionDocument = z.infer<typeof documentSchema>;

const SCALE_MIN = 0.05;
const SCALE_MAX = 20;

export function validateDocument(
  doc: unknown,
  imageSize?: { height: number; width: number },
): string[] {
  const violations: string[] = [];
  const parsed = documentSchema.safeParse(doc);
  if (!parsed.success) {
    for (const issue of parsed.error.issues) {
      violations.push(`${issue.path.join(".")}: ${issue.message}`);
    }
    return violations;
  }
  const d = parsed.data;
  d.regions.forEach((region, i) => {
    let mask: Uint8Array;
    try {
      mask = decodeMask(region.mask as RleMask);
    } catch (err) {
      violations.push(`region ${i}: ${(err as Error).message}`);
      return;
    }
    if (countOnes(mask) === 0) {
      violations.push(`region ${i}: region_mask must have at least one nonzero pixel`);
    }
    if (
      imageSize &&
      (region.mask.height !== imageSize.height || region.mask.width !== imageSize.width)
    ) {
      violations.push(`region ${i}: mask shape must match image`);
    }
    const frames = region.keyframes.map((k) => k.frame);
    for (let j = 1; j < frames.length; j++) {
      if (frames[j] <= frames[j - 1]) {
        violations.push(`region ${i}: keyframe frame indices must be strictly increasing`);
        break;
      }
    }
    if (frames[0] !== 0) {
      violations.push(`region ${i}: first keyframe must be at frame 0`);
    }
    if (frames[frames.length - 1] !== d.frame_count - 1) {
      violations.push(`region ${i}: last keyframe must be at frame F-1`);
    }
    const k0 = region.keyframes[0];
    const identity =
      k0.dx === 0 && k0.dy === 0 && k0.rotation === 0 && k0.log_scale === 0 &&
      (!k0.gain || (k0.gain[0] === 1 && k0.gain[1] === 1 && k0.gain[2] === 1)) &&
      (!k0.bias || (k0.bias[0] === 0 && k0.bias[1] === 0 && k0.bias[2] === 0));
    if (!identity) {
      violations.push(`region ${i}: first keyframe must be identity so frame 0 equals the source`);
    }
    for (const k of region.keyframes) {
      const scale = Math.exp(k.log_scale);
      if (!(scale > SCALE_MIN && scale < SCALE_MAX)) {
        violations.push(`region ${i}: scale exp(log_scale) must lie in (0.05, 20)`);
        break;
      }
    }
  });
  return violations;
}
