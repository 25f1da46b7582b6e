/**
 * The editor document: project binding, mask layer, keyframes, and playback
 * state. Serializes losslessly to the motion-spec JSON schema and back, and
 * autosaves to a pluggable storage so a reload restores the editing state.
 */

import { MaskLayer } from "./mask-tool.js";
import { encodeMask, decodeMask } from "./rle.js";
import { Keyframe, MotionDocument, validateDocument } from "./schema.js";
import { withAnchors } from "./trajectory.js";

export interface KeyValueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export interface DocumentState {
  projectId: string | null;
  imageRef: string;
  height: number;
  width: number;
  frameCount: number;
  keyframes: Keyframe[];
  playbackFrame: number;
  jobs: string[];
}

export class EditorDocument {
  state: DocumentState;
  mask: MaskLayer;
  private storage?: KeyValueStorage;
  private storageKey = "dualclock-studio-document";

  constructor(
    height: number,
    width: number,
    frameCount: number,
    storage?: KeyValueStorage,
  ) {
    this.state = {
      projectId: null,
      imageRef: "",
      height,
      width,
      frameCount,
      keyframes: [
        { frame: 0, dx: 0, dy: 0, rotation: 0, log_scale: 0 },
        { frame: frameCount - 1, dx: 0, dy: 0, rotation: 0, log_scale: 0 },
      ],
      playbackFrame: 0,
      jobs: [],
    };
    this.mask = new MaskLayer(height, width);
    this.storage = storage;
  }

  setKeyframes(keyframes: Keyframe[]): void {
    this.state.keyframes = withAnchors(keyframes, this.state.frameCount);
    this.autosave();
  }

  toMotionDocument(): MotionDocument {
    return {
      version: 1,
      image: this.state.imageRef,
      frame_count: this.state.frameCount,
      regions: [
        {
          mask: encodeMask(this.mask.data, this.state.height, this.state.width),
          keyframes: withAnchors(this.state.keyframes, this.state.frameCount),
        },
      ],
    };
  }

  /** Client-side validation with the same rules the server applies. */
  validate(): string[] {
    return validateDocument(this.toMotionDocument(), {
      height: this.state.height,
      width: this.state.width,
    });
  }

  autosave(): void {
    if (!this.storage) return;
    this.storage.setItem(
      this.storageKey,
      JSON.stringify({ state: this.state, mask: Array.from(this.mask.data) }),
    );
  }

  static restore(storage: KeyValueStorage): EditorDocument | null {
    const raw = storage.getItem("dualclock-studio-document");
    if (!raw) return null;
    const saved = JSON.parse(raw);
    const doc = new EditorDocument(
      saved.state.height,
      saved.state.width,
      saved.state.frameCount,
      storage,
    );
    doc.state = saved.state;
    doc.mask = new MaskLayer(saved.state.height, saved.state.width,
                             Uint8Array.from(saved.mask));
    return doc;
  }

  static fromMotionDocument(
    doc: MotionDocument,
    storage?: KeyValueStorage,
  ): EditorDocument {
    const region = doc.regions[0];
    const out = new EditorDocument(
      region.mask.height,
      region.mask.width,
      doc.frame_count,
      storage,
    );
    out.state.imageRef = doc.image;
    out.state.keyframes = region.keyframes.map((k) => ({ ...k }));
    out.mask = new MaskLayer(
      region.mask.height,
      region.mask.width,
      decodeMask(region.mask),
    );
    return out;
  }
}
