import { cloneGrid, countSet, emptyGrid, gridHeight, gridWidth } from "./brush.js";
import type { BitGrid, OpPayload, Point, RegionDraft, TaskKind } from "./types.js";

export interface FieldIssue {
  region: number;
  field: string;
  message: string;
}

/** Authoring model for one sample: regions drawn over a fixed grid plus
 * the two prompts. Mirrors the server-side operation invariants so export
 * can be blocked with per-field messages before anything leaves the app. */
export class AuthoringState {
  readonly width: number;
  readonly height: number;
  regions: RegionDraft[] = [];
  backgroundPrompt = "";
  editingPrompt = "";
  private nextId = 0;

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) throw new Error("grid must be positive");
    this.width = width;
    this.height = height;
  }

  addRegion(kind: TaskKind = "relocation"): RegionDraft {
    const draft: RegionDraft = {
      id: this.nextId++,
      kind,
      bits: emptyGrid(this.width, this.height),
      target: null,
      anchor: null,
      beginCentroid: null,
      chosenPrompt: null,
    };
    this.regions.push(draft);
    return draft;
  }

  removeRegion(id: number): void {
    this.regions = this.regions.filter((r) => r.id !== id);
  }

  region(id: number): RegionDraft {
    const r = this.regions.find((x) => x.id === id);
    if (!r) throw new Error(`no region ${id}`);
    return r;
  }

  setKind(id: number, kind: TaskKind): void {
    const r = this.region(id);
    r.kind = kind;
    if (kind !== "rotation") r.anchor = null;
  }

  setTarget(id: number, p: Point): void {
    this.region(id).target = { x: p.x, y: p.y };
  }

  setAnchor(id: number, p: Point): void {
    const r = this.region(id);
    if (r.kind !== "rotation") throw new Error(`${r.kind} regions have no anchor`);
    r.anchor = { x: p.x, y: p.y };
  }

  setMask(id: number, bits: BitGrid): void {
    if (gridWidth(bits) !== this.width || gridHeight(bits) !== this.height) {
      throw new Error("mask dimensions do not match the grid");
    }
    this.region(id).bits = cloneGrid(bits);
  }

  /** Stored when the k = 0 preview comes back; the server owns geometry. */
  setBeginCentroid(id: number, p: Point): void {
    this.region(id).beginCentroid = { x: p.x, y: p.y };
  }

  chooseIntent(id: number, prompt: string): void {
    this.region(id).chosenPrompt = prompt;
  }

  validate(): FieldIssue[] {
    const issues: FieldIssue[] = [];
    if (this.regions.length === 0) {
      issues.push({ region: -1, field: "regions", message: "author at least one region" });
    }
    this.regions.forEach((r, i) => {
      if (countSet(r.bits) === 0) {
        issues.push({ region: i, field: "mask", message: "scribble a source region" });
      }
      if (!r.target) {
        issues.push({ region: i, field: "target", message: "click a target point" });
      }
      if (r.kind === "rotation" && !r.anchor) {
        issues.push({ region: i, field: "anchor", message: "rotation needs an anchor point" });
      }
      if (r.kind !== "rotation" && r.anchor) {
        issues.push({ region: i, field: "anchor", message: `${r.kind} must not have an anchor` });
      }
    });
    return issues;
  }

  /** Wire payloads for /preview and /jobs. Throws if validation fails. */
  toOpPayloads(): OpPayload[] {
    const issues = this.validate();
    if (issues.length > 0) {
      const first = issues[0]!;
      throw new Error(`region ${first.region} ${first.field}: ${first.message}`);
    }
    return this.regions.map((r) => ({
      task: r.kind,
      target: [r.target!.x, r.target!.y] as [number, number],
      anchor: r.anchor ? ([r.anchor.x, r.anchor.y] as [number, number]) : null,
      mask_bits: r.bits,
    }));
  }
}
