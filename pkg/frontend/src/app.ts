/**
 * Studio wiring: canvas mask painting over the source image, trajectory
 * drag/rotate/scale handles, warped-reference preview playback, job
 * submission with progress, and a side-by-side compare strip.
 */

import { ServiceClient, ValidationRejected } from "./api.js";
import { EditorDocument } from "./document.js";
import {
  applyDrag,
  applyRotate,
  applyScale,
  interpolate,
  keyframesFromDragPath,
} from "./trajectory.js";

type Mode = "paint" | "erase" | "drag" | "rotate" | "scale";

export class StudioApp {
  private doc: EditorDocument | null = null;
  private client: ServiceClient;
  private mode: Mode = "paint";
  private brushRadius = 6;
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private image: HTMLImageElement | null = null;
  private dragPath: Array<[number, number]> = [];
  private previewFrames: string[] = [];
  private resultFrames: string[] = [];
  private playTimer: number | null = null;
  private playIndex = 0;

  constructor(private rootEl: HTMLElement, baseUrl: string) {
    this.client = new ServiceClient(baseUrl);
    this.canvas = rootEl.querySelector("#editor-canvas") as HTMLCanvasElement;
    this.ctx = this.canvas.getContext("2d")!;
    this.bindToolbar();
    this.bindCanvas();
    const restored = EditorDocument.restore(window.localStorage);
    if (restored) {
      this.doc = restored;
      this.setStatus("restored local document");
    }
  }

  private el<T extends HTMLElement>(selector: string): T {
    return this.rootEl.querySelector(selector) as T;
  }

  private setStatus(text: string, isError = false): void {
    const banner = this.el<HTMLDivElement>("#status");
    banner.textContent = text;
    banner.className = isError ? "status error" : "status";
  }

  private bindToolbar(): void {
    this.el<HTMLInputElement>("#image-input").addEventListener("change", (e) => {
      const file = (e.target as HTMLInputElement).files?.[0];
      if (file) void this.loadImage(file);
    });
    for (const mode of ["paint", "erase", "drag", "rotate", "scale"] as Mode[]) {
      this.el<HTMLButtonElement>(`#tool-${mode}`).addEventListener("click", () => {
        this.mode = mode;
        this.setStatus(`tool: ${mode}`);
      });
    }
    this.el<HTMLButtonElement>("#undo").addEventListener("click", () => {
      this.doc?.mask.undo();
      this.redraw();
    });
    this.el<HTMLButtonElement>("#redo").addEventListener("click", () => {
      this.doc?.mask.redo();
      this.redraw();
    });
    this.el<HTMLButtonElement>("#invert").addEventListener("click", () => {
      this.doc?.mask.invert();
      this.doc?.autosave();
      this.redraw();
    });
    this.el<HTMLButtonElement>("#preview").addEventListener("click", () => void this.preview());
    this.el<HTMLButtonElement>("#submit").addEventListener("click", () => void this.submit());
  }

  private async loadImage(file: File): Promise<void> {
    try {
      const project = await this.client.createProject(file);
      this.doc = new EditorDocument(project.height, project.width, 16, window.localStorage);
      this.doc.state.projectId = project.id;
      this.doc.state.imageRef = project.image_blob;
      const url = URL.createObjectURL(file);
      this.image = new Image();
      this.image.onload = () => this.redraw();
      this.image.src = url;
      this.canvas.width = project.width;
      this.canvas.height = project.height;
      this.setStatus(`project ${project.id.slice(0, 8)} created`);
    } catch (err) {
      this.setStatus(`upload failed: ${(err as Error).message}`, true);
    }
  }

  private canvasPoint(e: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [
      ((e.clientX - rect.left) / rect.width) * this.canvas.width,
      ((e.clientY - rect.top) / rect.height) * this.canvas.height,
    ];
  }

  private bindCanvas(): void {
    let stroke: Array<[number, number]> | null = null;
    this.canvas.addEventListener("mousedown", (e) => {
      stroke = [this.canvasPoint(e)];
      this.dragPath = [this.canvasPoint(e)];
    });
    this.canvas.addEventListener("mousemove", (e) => {
      if (!stroke) return;
      stroke.push(this.canvasPoint(e));
      this.dragPath.push(this.canvasPoint(e));
      if (this.mode === "paint" || this.mode === "erase") this.redraw(stroke);
    });
    this.canvas.addEventListener("mouseup", () => {
      if (!stroke || !this.doc) {
        stroke = null;
        return;
      }
      const F = this.doc.state.frameCount;
      if (this.mode === "paint" || this.mode === "erase") {
        this.doc.mask.paintStroke(stroke, this.brushRadius, this.mode === "paint");
      } else if (this.mode === "drag") {
        this.doc.setKeyframes(keyframesFromDragPath(this.dragPath, F));
      } else if (this.mode === "rotate") {
        const [x0, y0] = this.dragPath[0];
        const [x1, y1] = this.dragPath[this.dragPath.length - 1];
        this.doc.setKeyframes(
          applyRotate(this.doc.state.keyframes, F - 1, Math.atan2(y1 - y0, x1 - x0)),
        );
      } else if (this.mode === "scale") {
        const [x0] = this.dragPath[0];
        const [x1] = this.dragPath[this.dragPath.length - 1];
        const factor = Math.max(0.1, Math.min(10, 1 + (x1 - x0) / 100));
        this.doc.setKeyframes(applyScale(this.doc.state.keyframes, F - 1, factor));
      }
      this.doc.autosave();
      stroke = null;
      this.redraw();
    });
  }

  private redraw(liveStroke?: Array<[number, number]>): void {
    if (!this.doc) return;
    const { width, height } = this.canvas;
    this.ctx.clearRect(0, 0, width, height);
    if (this.image) this.ctx.drawImage(this.image, 0, 0, width, height);
    // mask overlay
    const overlay = this.ctx.getImageData(0, 0, width, height);
    const mask = this.doc.mask.data;
    for (let i = 0; i < mask.length; i++) {
      if (mask[i]) {
        overlay.data[i * 4] = Math.min(255, overlay.data[i * 4] + 90);
        overlay.data[i * 4 + 3] = 255;
      }
    }
    this.ctx.putImageData(overlay, 0, 0);
    if (liveStroke) {
      this.ctx.strokeStyle = this.mode === "erase" ? "#f44" : "#4f4";
      this.ctx.lineWidth = this.brushRadius * 2;
      this.ctx.lineCap = "round";
      this.ctx.beginPath();
      liveStroke.forEach(([x, y], i) => (i ? this.ctx.lineTo(x, y) : this.ctx.moveTo(x, y)));
      this.ctx.stroke();
    }
    this.drawTrajectory();
  }

  private drawTrajectory(): void {
    if (!this.doc) return;
    const samples = interpolate(this.doc.state.keyframes, this.doc.state.frameCount);
    this.ctx.strokeStyle = "#ff0";
    this.ctx.lineWidth = 1.5;
    this.ctx.beginPath();
    const cx = this.canvas.width / 2;
    const cy = this.canvas.height / 2;
    samples.forEach((s, i) =>
      i ? this.ctx.lineTo(cx + s.dx, cy + s.dy) : this.ctx.moveTo(cx + s.dx, cy + s.dy),
    );
    this.ctx.stroke();
    this.ctx.fillStyle = "#ff0";
    for (const k of this.doc.state.keyframes) {
      this.ctx.fillRect(cx + (k.dx ?? 0) - 2, cy + (k.dy ?? 0) - 2, 4, 4);
    }
  }

  private validateOrReport(): boolean {
    if (!this.doc) {
      this.setStatus("load an image first", true);
      return false;
    }
    const violations = this.doc.validate();
    if (violations.length) {
      this.setStatus(`invalid spec: ${violations.join("; ")}`, true);
      return false;
    }
    return true;
  }

  private async preview(): Promise<void> {
    if (!this.validateOrReport() || !this.doc?.state.projectId) return;
    try {
      const { frames } = await this.client.previewWarp(
        this.doc.state.projectId,
        this.doc.toMotionDocument(),
      );
      this.previewFrames = frames.map((f) =>
        URL.createObjectURL(new Blob([f.slice().buffer as ArrayBuffer], { type: "image/png" })));
      this.startPlayback("preview-player", this.previewFrames);
      this.setStatus(`preview: ${frames.length} frames`);
    } catch (err) {
      if (err instanceof ValidationRejected) {
        this.setStatus(`server rejected: ${err.violations.join("; ")}`, true);
      } else {
        this.setStatus(`preview failed: ${(err as Error).message} (document kept locally)`, true);
        this.doc.autosave();
      }
    }
  }

  private async submit(): Promise<void> {
    if (!this.validateOrReport() || !this.doc?.state.projectId) return;
    const tWeak = parseInt(this.el<HTMLInputElement>("#t-weak").value, 10);
    const tStrong = parseInt(this.el<HTMLInputElement>("#t-strong").value, 10);
    const seed = parseInt(this.el<HTMLInputElement>("#seed").value, 10) || 0;
    try {
      const job = await this.client.submitJob(
        this.doc.state.projectId,
        this.doc.toMotionDocument(),
        { t_weak: tWeak, t_strong: tStrong, seed },
        crypto.randomUUID(),
      );
      this.doc.state.jobs.push(job.id);
      this.doc.autosave();
      void this.poll(job.id);
    } catch (err) {
      this.setStatus(`submit failed: ${(err as Error).message}`, true);
    }
  }

  private async poll(jobId: string): Promise<void> {
    let lastStep = -1;
    const bar = this.el<HTMLProgressElement>("#job-progress");
    for (;;) {
      let job;
      try {
        job = await this.client.getJob(jobId);
      } catch (err) {
        this.setStatus(`poll failed: ${(err as Error).message}`, true);
        return;
      }
      const step = job.progress?.current_step ?? 0;
      if (step >= lastStep) {
        lastStep = step;
        bar.max = job.progress?.total ?? 1;
        bar.value = step;
      }
      if (job.status === "done") {
        const frames = await this.client.fetchResult(jobId);
        this.resultFrames = frames.map((f) =>
          URL.createObjectURL(new Blob([f.slice().buffer as ArrayBuffer], { type: "image/png" })));
        this.startPlayback("result-player", this.resultFrames);
        this.setStatus(`job ${jobId.slice(0, 8)} done (${job.result_hash?.slice(0, 12)})`);
        return;
      }
      if (job.status === "failed") {
        this.setStatus(`job failed: ${job.error}`, true);
        return;
      }
      await new Promise((r) => setTimeout(r, 500));
    }
  }

  private startPlayback(elementId: string, frames: string[]): void {
    if (this.playTimer !== null) window.clearInterval(this.playTimer);
    const img = this.el<HTMLImageElement>(`#${elementId}`);
    this.playIndex = 0;
    this.playTimer = window.setInterval(() => {
      if (!frames.length) return;
      img.src = frames[this.playIndex % frames.length];
      this.playIndex++;
    }, 125);
  }
}

declare global {
  interface Window {
    studioApp?: StudioApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("studio-root")) {
  const base = (window as unknown as { SERVICE_URL?: string }).SERVICE_URL ?? "";
  window.studioApp = new StudioApp(document.getElementById("studio-root")!, base);
}
