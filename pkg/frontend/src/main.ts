/** Browser entry point: canvas painting, drag-to-force, control panel. */

import { PreviewClient } from "./client.js";
import { DragTracker } from "./gestures.js";
import { buildControlPanel } from "./panel.js";
import type { FrameMessage } from "./protocol.js";

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/ws`;
}

async function paint(
  canvas: HTMLCanvasElement,
  ctx: CanvasRenderingContext2D,
  frame: FrameMessage,
): Promise<void> {
  const blob = new Blob([frame.png.buffer as ArrayBuffer], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  if (canvas.width !== bitmap.width || canvas.height !== bitmap.height) {
    canvas.width = bitmap.width;
    canvas.height = bitmap.height;
  }
  ctx.drawImage(bitmap, 0, 0);
  bitmap.close();
}

function bootstrap(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const panelRoot = document.getElementById("panel") as HTMLElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2D canvas unavailable");
  }

  let painting = false;
  let frameTimes: number[] = [];
  let panel: ReturnType<typeof buildControlPanel>;

  const client = new PreviewClient(wsUrl(), {
    onFrame: (frame) => {
      const now = performance.now();
      frameTimes.push(now);
      frameTimes = frameTimes.filter((t) => now - t < 2000);
      if (!painting) {
        painting = true;
        // paint only the newest frame; anything older is already stale
        const latest = () => client.latestFrame;
        void (async () => {
          let frameToPaint = latest();
          while (frameToPaint) {
            await paint(canvas, ctx, frameToPaint);
            frameToPaint =
              latest() !== frameToPaint ? latest() : null;
          }
          painting = false;
        })();
      }
      panel.update(frame.summary, frameTimes.length / 2.0);
    },
    onState: (state) => panel.setConnection(`connection: ${state}`),
  });
  panel = buildControlPanel(panelRoot, client);

  const drag = new DragTracker();
  canvas.addEventListener("pointerdown", (ev) => {
    const rect = canvas.getBoundingClientRect();
    drag.press(
      ((ev.clientX - rect.left) / rect.width) * canvas.width,
      ((ev.clientY - rect.top) / rect.height) * canvas.height,
    );
  });
  canvas.addEventListener("pointerup", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const cmd = drag.release(
      ((ev.clientX - rect.left) / rect.width) * canvas.width,
      ((ev.clientY - rect.top) / rect.height) * canvas.height,
    );
    if (cmd) {
      client.send(cmd);
    }
  });
  canvas.addEventListener("pointerleave", () => drag.cancel());

  client.connect();
}

bootstrap();
