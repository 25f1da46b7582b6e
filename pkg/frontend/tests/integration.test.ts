/**
 * End-to-end round trip against a live service: a document authored through
 * the editor model serializes to a spec whose server preview is
 * bit-identical to the CLI warp of the same spec.
 *
 * Skipped unless SERVICE_URL is set (scripts/run_integration.sh starts a
 * service and runs this file with it).
 */

import { describe, expect, it } from "vitest";
import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ServiceClient } from "../src/api.js";
import { EditorDocument } from "../src/document.js";

const SERVICE_URL = process.env.SERVICE_URL;
const PYTHON = process.env.PYTHON ?? "python3";

describe.skipIf(!SERVICE_URL)("UI round trip against the service", () => {
  it("server preview of a UI-authored spec matches the CLI warp bit-for-bit", async () => {
    const client = new ServiceClient(SERVICE_URL!);
    const work = mkdtempSync(join(tmpdir(), "studio-it-"));

    // a 16x16 source image rendered by the backend encoder for stability
    const imgPath = join(work, "img.png");
    execFileSync(PYTHON, [
      "-c",
      [
        "import numpy as np",
        "from dualclock.serialize import frame_to_png_bytes",
        "rng = np.random.default_rng(8)",
        "frame = (rng.integers(0, 256, size=(3, 16, 16)) / 255.0).astype(np.float32)",
        `open(${JSON.stringify(imgPath)}, 'wb').write(frame_to_png_bytes(frame))`,
      ].join("\n"),
    ]);
    const imgBytes = readFileSync(imgPath);

    const project = await client.createProject(
      new Blob([new Uint8Array(imgBytes)], { type: "image/png" }),
    );
    expect(project.height).toBe(16);

    // author through the editor model: paint a blob, drag it right
    const doc = new EditorDocument(project.height, project.width, 4);
    doc.state.projectId = project.id;
    doc.mask.paintStroke(
      [
        [5, 6],
        [6, 6],
      ],
      2,
      true,
    );
    doc.setKeyframes([
      { frame: 0, dx: 0, dy: 0, rotation: 0, log_scale: 0 },
      { frame: 3, dx: 3, dy: 1, rotation: 0, log_scale: 0 },
    ]);
    expect(doc.validate()).toEqual([]);
    const spec = doc.toMotionDocument();

    const preview = await client.previewWarp(project.id, spec);
    expect(preview.frames.length).toBe(4);

    // same spec through the CLI
    const specPath = join(work, "spec.json");
    writeFileSync(specPath, JSON.stringify(spec));
    const outDir = join(work, "cli-out");
    execFileSync(PYTHON, [
      "-m",
      "dualclock.cli",
      "warp",
      "--image",
      imgPath,
      "--spec",
      specPath,
      "--out",
      outDir,
    ]);

    for (let f = 0; f < 4; f++) {
      const cliFrame = readFileSync(join(outDir, `frame_${String(f).padStart(5, "0")}.png`));
      const cliMask = readFileSync(join(outDir, `mask_${String(f).padStart(5, "0")}.png`));
      expect(Buffer.compare(Buffer.from(preview.frames[f]), cliFrame)).toBe(0);
      expect(Buffer.compare(Buffer.from(preview.masks[f]), cliMask)).toBe(0);
    }
  }, 60_000);
});
