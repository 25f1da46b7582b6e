/**
 * Client for the authoring service. Preview and result endpoints stream
 * multipart PNG frame sequences; the parser here splits them back into
 * named binary parts.
 */

import { MotionDocument } from "./schema.js";

export interface JobInfo {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  progress: { current_step: number; total: number };
  error?: string;
  result_hash?: string;
}

export interface ProjectInfo {
  id: string;
  height: number;
  width: number;
  image_blob: string;
}

const BOUNDARY = "dualclockframe";

export function parseMultipart(body: Uint8Array, boundary = BOUNDARY): Map<string, Uint8Array> {
  const parts = new Map<string, Uint8Array>();
  const text = new TextDecoder("latin1").decode(body);
  const marker = `--${boundary}`;
  let offset = 0;
  while (true) {
    const start = text.indexOf(marker, offset);
    if (start < 0) break;
    const headerStart = start + marker.length;
    if (text.startsWith("--", headerStart)) break; // terminator
    const headerEnd = text.indexOf("\r\n\r\n", headerStart);
    if (headerEnd < 0) break;
    const headers = text.slice(headerStart, headerEnd);
    const nameMatch = /name="([^"]+)"/.exec(headers);
    const lengthMatch = /Content-Length: (\d+)/.exec(headers);
    const payloadStart = headerEnd + 4;
    const length = lengthMatch ? parseInt(lengthMatch[1], 10) : 0;
    if (nameMatch) {
      parts.set(nameMatch[1], body.slice(payloadStart, payloadStart + length));
    }
    offset = payloadStart + length;
  }
  return parts;
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async json<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        detail = body.violations ? body.violations.join("; ") : JSON.stringify(body);
      } catch {
        /* non-JSON error body */
      }
      throw new Error(`service error ${response.status}: ${detail}`);
    }
    return response.json() as Promise<T>;
  }

  async health(): Promise<{ status: string; checkpoint: boolean }> {
    return this.json(await this.fetchFn(`${this.baseUrl}/healthz`));
  }

  async createProject(imagePng: Blob, requestKey?: string): Promise<ProjectInfo> {
    const form = new FormData();
    form.append("file", imagePng, "image.png");
    if (requestKey) form.append("request_key", requestKey);
    return this.json(
      await this.fetchFn(`${this.baseUrl}/projects`, { method: "POST", body: form }),
    );
  }

  async previewWarp(
    projectId: string,
    spec: MotionDocument,
  ): Promise<{ frames: Uint8Array[]; masks: Uint8Array[]; warnings: string[] }> {
    const response = await this.fetchFn(
      `${this.baseUrl}/projects/${projectId}/preview-warp`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ spec }),
      },
    );
    if (!response.ok) {
      const body = await response.json();
      throw new ValidationRejected(body.violations ?? [JSON.stringify(body)]);
    }
    const parts = parseMultipart(new Uint8Array(await response.arrayBuffer()));
    const frames: Uint8Array[] = [];
    const masks: Uint8Array[] = [];
    for (let f = 0; ; f++) {
      const frame = parts.get(`frame_${String(f).padStart(5, "0")}`);
      if (!frame) break;
      frames.push(frame);
      const mask = parts.get(`mask_${String(f).padStart(5, "0")}`);
      if (mask) masks.push(mask);
    }
    const warnings = JSON.parse(response.headers.get("X-Warp-Warnings") ?? "[]");
    return { frames, masks, warnings };
  }

  async submitJob(
    projectId: string,
    spec: MotionDocument,
    sampler: { t_weak: number; t_strong: number; seed?: number; regime?: string },
    requestKey?: string,
  ): Promise<JobInfo> {
    const response = await this.fetchFn(`${this.baseUrl}/projects/${projectId}/jobs`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ spec, sampler, request_key: requestKey }),
    });
    if (response.status === 422) {
      const body = await response.json();
      throw new ValidationRejected(body.violations ?? [JSON.stringify(body)]);
    }
    return this.json(response);
  }

  async getJob(jobId: string): Promise<JobInfo> {
    return this.json(await this.fetchFn(`${this.baseUrl}/jobs/${jobId}`));
  }

  async fetchResult(jobId: string): Promise<Uint8Array[]> {
    const response = await this.fetchFn(`${this.baseUrl}/jobs/${jobId}/result`);
    if (response.status === 409) throw new Error("result not ready");
    if (!response.ok) throw new Error(`service error ${response.status}`);
    const parts = parseMultipart(new Uint8Array(await response.arrayBuffer()));
    const frames: Uint8Array[] = [];
    for (let f = 0; ; f++) {
      const frame = parts.get(`frame_${String(f).padStart(5, "0")}`);
      if (!frame) break;
      frames.push(frame);
    }
    return frames;
  }
}

export class ValidationRejected extends Error {
  constructor(public violations: string[]) {
    super(violations.join("; "));
  }
}
