/** Control panel: playback buttons, timescale, camera modes, field toggles,
 * and the live summary overlay. Pure DOM wiring around PreviewClient.send. */

import type { PreviewClient } from "./client.js";
import type { CameraMode, FrameSummary } from "./protocol.js";
import { CAMERA_MODES } from "./protocol.js";

export interface PanelHandles {
  update(summary: FrameSummary, fps: number): void;
  setConnection(text: string): void;
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const el = document.createElement("button");
  el.textContent = label;
  el.addEventListener("click", onClick);
  return el;
}

export function buildControlPanel(
  root: HTMLElement,
  client: PreviewClient,
  fieldCount = 4,
): PanelHandles {
  const bar = document.createElement("div");
  bar.className = "controls";
  bar.appendChild(button("pause", () => client.send({ type: "pause" })));
  bar.appendChild(button("resume", () => client.send({ type: "resume" })));
  bar.appendChild(button("reset", () => client.send({ type: "reset" })));

  const scale = document.createElement("input");
  scale.type = "range";
  scale.min = "0.1";
  scale.max = "4";
  scale.step = "0.1";
  scale.value = "1";
  scale.title = "timescale";
  scale.addEventListener("change", () =>
    client.send({ type: "set_timescale", timescale: Number(scale.value) }),
  );
  bar.appendChild(scale);

  const modes = document.createElement("select");
  for (const mode of CAMERA_MODES) {
    const opt = document.createElement("option");
    opt.value = mode;
    opt.textContent = mode;
    modes.appendChild(opt);
  }
  modes.addEventListener("change", () =>
    client.send({ type: "set_camera_mode", mode: modes.value as CameraMode }),
  );
  bar.appendChild(modes);

  const fields = document.createElement("div");
  fields.className = "fields";
  const fieldBoxes: HTMLInputElement[] = [];
  for (let i = 0; i < fieldCount; i += 1) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = true;
    box.addEventListener("change", () =>
      client.send({ type: "toggle_field", field_index: i }),
    );
    label.appendChild(box);
    label.appendChild(document.createTextNode(` field ${i}`));
    fields.appendChild(label);
    fieldBoxes.push(box);
  }
  bar.appendChild(fields);

  const overlay = document.createElement("div");
  overlay.className = "overlay";
  const connection = document.createElement("div");
  connection.className = "connection";
  root.appendChild(bar);
  root.appendChild(overlay);
  root.appendChild(connection);

  return {
    update(summary: FrameSummary, fps: number): void {
      overlay.textContent =
        `frame ${summary.sim_frame} | t=${summary.sim_time.toFixed(3)}s | ` +
        `${summary.objects} objects | fields [${summary.active_fields}] | ` +
        `${summary.paused ? "paused" : "running"} | ${fps.toFixed(1)} fps`;
      fieldBoxes.forEach((box, i) => {
        box.checked = summary.active_fields.includes(i);
      });
    },
    setConnection(text: string): void {
      connection.textContent = text;
    },
  };
}
