/** Browser glue: two-layer canvas editor (painting + draggable object bbox),
 * harmonize controls, history strip, export. All image processing happens
 * server-side; this file only moves pixels between <canvas> and the API. */

import { ApiClient, ApiError, type Mode } from "./api.js";
import {
  type BBox,
  type Handle,
  MIN_SIZE,
  clampBBox,
  moveBBox,
  resizeBBox,
  serializeBBox,
} from "./geometry.js";
import { AppState } from "./state.js";

const HANDLE_PX = 6;

interface Loaded {
  image: HTMLImageElement;
  base64: string; // PNG payload as sent to the API
}

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

async function readFile(file: File): Promise<Loaded> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let bin = "";
  for (const b of buf) bin += String.fromCharCode(b);
  const base64 = btoa(bin);
  const image = new Image();
  await new Promise<void>((resolve, reject) => {
    image.onload = () => resolve();
    image.onerror = () => reject(new Error(`cannot decode ${file.name}`));
    image.src = `data:image/png;base64,${base64}`;
  });
  return { image, base64 };
}

class Editor {
  private painting: Loaded | null = null;
  private object: Loaded | null = null;
  private objectMask: Loaded | null = null;
  private state = new AppState();
  private client = new ApiClient("");
  private aspectLock = false;
  private drag: { kind: "move" | Handle; lastX: number; lastY: number } | null = null;

  private canvas = $("editor") as HTMLCanvasElement;
  private result = $("result") as HTMLCanvasElement;

  constructor() {
    this.bindInputs();
    this.bindCanvas();
    this.bindControls();
    void this.refreshHealth();
  }

  private bindInputs(): void {
    const hook = (id: string, assign: (l: Loaded) => void) => {
      ($(id) as HTMLInputElement).addEventListener("change", async (ev) => {
        const file = (ev.target as HTMLInputElement).files?.[0];
        if (!file) return;
        try {
          assign(await readFile(file));
          this.afterLoad();
        } catch (err) {
          this.showError(String(err));
        }
      });
    };
    hook("painting-file", (l) => (this.painting = l));
    hook("object-file", (l) => (this.object = l));
    hook("mask-file", (l) => (this.objectMask = l));
  }

  private afterLoad(): void {
    if (this.painting) {
      this.canvas.width = this.painting.image.width;
      this.canvas.height = this.painting.image.height;
      if (!this.state.bbox) {
        const s = Math.max(MIN_SIZE, Math.floor(Math.min(this.canvas.width, this.canvas.height) / 3));
        this.state.bbox = clampBBox(
          { x0: 8, y0: 8, x1: 8 + s, y1: 8 + s },
          this.canvas.width,
          this.canvas.height,
        );
      }
    }
    this.redraw();
  }

  private bindCanvas(): void {
    this.canvas.addEventListener("mousedown", (ev) => {
      if (!this.state.bbox) return;
      const { x, y } = this.canvasPos(ev);
      this.drag = { kind: this.hitTest(x, y), lastX: x, lastY: y };
    });
    window.addEventListener("mousemove", (ev) => {
      if (!this.drag || !this.state.bbox) return;
      const { x, y } = this.canvasPos(ev);
      const dx = x - this.drag.lastX;
      const dy = y - this.drag.lastY;
      this.drag.lastX = x;
      this.drag.lastY = y;
      const w = this.canvas.width;
      const h = this.canvas.height;
      this.state.bbox =
        this.drag.kind === "move"
          ? moveBBox(this.state.bbox, dx, dy, w, h)
          : resizeBBox(this.state.bbox, this.drag.kind, dx, dy, {
              canvasW: w,
              canvasH: h,
              aspectLock: this.aspectLock,
            });
      this.redraw();
    });
    window.addEventListener("mouseup", () => (this.drag = null));
  }

  private canvasPos(ev: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  }

  private hitTest(x: number, y: number): "move" | Handle {
    const b = this.state.bbox as BBox;
    const near = (px: number, py: number) =>
      Math.abs(x - px) <= HANDLE_PX && Math.abs(y - py) <= HANDLE_PX;
    if (near(b.x0, b.y0)) return "nw";
    if (near(b.x1, b.y0)) return "ne";
    if (near(b.x0, b.y1)) return "sw";
    if (near(b.x1, b.y1)) return "se";
    return "move";
  }

  private bindControls(): void {
    ($("aspect-lock") as HTMLInputElement).addEventListener(
      "change",
      (ev) => (this.aspectLock = (ev.target as HTMLInputElement).checked),
    );
    ($("mode") as HTMLSelectElement).addEventListener(
      "change",
      (ev) => (this.state.mode = (ev.target as HTMLSelectElement).value as Mode),
    );
    $("harmonize").addEventListener("click", () => void this.harmonize());
    $("export").addEventListener("click", () => this.exportResult());
  }

  private async refreshHealth(): Promise<void> {
    try {
      const h = await this.client.health();
      $("health").textContent = `server: ${h.status} (${h.profile ?? "no model"})`;
    } catch {
      $("health").textContent = "server: offline";
    }
  }

  private async harmonize(): Promise<void> {
    if (!this.painting || !this.object || !this.objectMask || !this.state.bbox) {
      this.showError("load painting, object, and mask first");
      return;
    }
    const bbox = this.state.bbox;
    const mode = this.state.mode;
    const id = this.state.beginRequest();
    this.redraw();
    try {
      const resp = await this.client.harmonize({
        background_png: this.painting.base64,
        object_png: this.object.base64,
        object_mask_png: this.objectMask.base64,
        bbox: serializeBBox(bbox),
        mode,
      });
      if (this.state.completeRequest(id, resp, bbox, mode)) {
        await this.showResult(resp.harmonized_png, resp.composite_png);
        $("latency").textContent = `${resp.latency_ms.toFixed(1)} ms`;
        this.renderHistory();
      }
    } catch (err) {
      const msg = err instanceof ApiError ? err.message : String(err);
      this.state.failRequest(id, msg);
      this.showError(msg);
    }
    this.redraw();
  }

  private async showResult(harmonized: string, composite: string): Promise<void> {
    const load = (b64: string) =>
      new Promise<HTMLImageElement>((resolve, reject) => {
        const img = new Image();
        img.onload = () => resolve(img);
        img.onerror = () => reject(new Error("bad result image"));
        img.src = `data:image/png;base64,${b64}`;
      });
    const [h, c] = await Promise.all([load(harmonized), load(composite)]);
    this.result.width = h.width * 2 + 8;
    this.result.height = h.height;
    const ctx = this.result.getContext("2d") as CanvasRenderingContext2D;
    ctx.clearRect(0, 0, this.result.width, this.result.height);
    ctx.drawImage(c, 0, 0);
    ctx.drawImage(h, h.width + 8, 0);
  }

  private renderHistory(): void {
    const strip = $("history");
    strip.innerHTML = "";
    for (const entry of this.state.history) {
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${entry.thumbnail}`;
      img.title = `${entry.mode} [${entry.bbox.join(", ")}] ${entry.latencyMs.toFixed(0)} ms`;
      img.className = "thumb";
      strip.appendChild(img);
    }
  }

  private exportResult(): void {
    if (!this.state.canExport) return;
    const a = document.createElement("a");
    a.href = `data:image/png;base64,${this.state.exportPayload()}`;
    a.download = this.state.exportFilename();
    a.click();
  }

  private showError(message: string): void {
    const el = $("error");
    el.textContent = message;
    el.classList.remove("hidden");
    setTimeout(() => el.classList.add("hidden"), 5000);
  }

  private redraw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.painting) ctx.drawImage(this.painting.image, 0, 0);
    const b = this.state.bbox;
    if (b && this.object) {
      ctx.drawImage(this.object.image, b.x0, b.y0, b.x1 - b.x0, b.y1 - b.y0);
    }
    if (b) {
      ctx.strokeStyle = this.state.busy ? "#999" : "#00c853";
      ctx.lineWidth = 2;
      ctx.strokeRect(b.x0, b.y0, b.x1 - b.x0, b.y1 - b.y0);
      ctx.fillStyle = "#00c853";
      for (const [hx, hy] of [
        [b.x0, b.y0],
        [b.x1, b.y0],
        [b.x0, b.y1],
        [b.x1, b.y1],
      ]) {
        ctx.fillRect(hx - HANDLE_PX / 2, hy - HANDLE_PX / 2, HANDLE_PX, HANDLE_PX);
      }
    }
    ($("export") as HTMLButtonElement).disabled = !this.state.canExport;
    ($("bbox-readout") as HTMLElement).textContent = b
      ? `bbox: [${serializeBBox(b).join(", ")}]`
      : "bbox: none";
  }
}

new Editor();
