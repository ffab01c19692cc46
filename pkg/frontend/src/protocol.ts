/**
 * Wire protocol shared with the preview service (version 1).
 *
 * Server -> client binary frame message:
 *   u8   message type (0x01 = frame)
 *   u32  stream index (little-endian, strictly increasing per session)
 *   f64  timestamp (seconds)
 *   u32  PNG length + PNG bytes
 *   u32  summary length + UTF-8 JSON summary
 *
 * Client -> server: one JSON command per text message; server acks with
 * JSON {ok, type, reason?}.
 */

export const FRAME_MSG = 0x01;

export interface FrameSummary {
  sim_frame: number;
  sim_time: number;
  objects: number;
  active_fields: number[];
  paused: boolean;
}

export interface FrameMessage {
  index: number;
  timestamp: number;
  png: Uint8Array;
  summary: FrameSummary;
}

export const CAMERA_MODES = [
  "static",
  "orbit_xy_cw",
  "orbit_xy_ccw",
  "orbit_yz_cw",
  "orbit_yz_ccw",
  "lateral",
  "descent",
] as const;
export type CameraMode = (typeof CAMERA_MODES)[number];

export type PreviewCommand =
  | { type: "apply_point_force"; x_px: number; y_px: number; dir_x: number; dir_y: number; strength: number }
  | { type: "toggle_field"; field_index: number }
  | { type: "set_camera_mode"; mode: CameraMode }
  | { type: "set_timescale"; timescale: number }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "reset" };

export interface CommandAck {
  ok: boolean;
  type?: string;
  reason?: string;
}

export class ProtocolError extends Error {}

/** Decode one binary frame message; throws ProtocolError on malformed input. */
export function decodeFrameMessage(buffer: ArrayBuffer): FrameMessage {
  const view = new DataView(buffer);
  if (buffer.byteLength < 21 || view.getUint8(0) !== FRAME_MSG) {
    throw new ProtocolError("not a frame message");
  }
  const index = view.getUint32(1, true);
  const timestamp = view.getFloat64(5, true);
  let offset = 13;
  const pngLen = view.getUint32(offset, true);
  offset += 4;
  if (offset + pngLen + 4 > buffer.byteLength) {
    throw new ProtocolError("truncated image payload");
  }
  const png = new Uint8Array(buffer, offset, pngLen).slice();
  offset += pngLen;
  const summaryLen = view.getUint32(offset, true);
  offset += 4;
  if (offset + summaryLen > buffer.byteLength) {
    throw new ProtocolError("truncated summary payload");
  }
  const text = new TextDecoder().decode(
    new Uint8Array(buffer, offset, summaryLen),
  );
  let summary: FrameSummary;
  try {
    summary = JSON.parse(text) as FrameSummary;
  } catch (err) {
    throw new ProtocolError(`bad summary JSON: ${err}`);
  }
  return { index, timestamp, png, summary };
}

/** Encode a frame message (used by tests to mirror the service). */
export function encodeFrameMessage(
  index: number,
  timestamp: number,
  png: Uint8Array,
  summary: object,
): ArrayBuffer {
  const summaryBytes = new TextEncoder().encode(JSON.stringify(summary));
  const total = 1 + 4 + 8 + 4 + png.length + 4 + summaryBytes.length;
  const buffer = new ArrayBuffer(total);
  const view = new DataView(buffer);
  view.setUint8(0, FRAME_MSG);
  view.setUint32(1, index, true);
  view.setFloat64(5, timestamp, true);
  let offset = 13;
  view.setUint32(offset, png.length, true);
  offset += 4;
  new Uint8Array(buffer, offset, png.length).set(png);
  offset += png.length;
  view.setUint32(offset, summaryBytes.length, true);
  offset += 4;
  new Uint8Array(buffer, offset, summaryBytes.length).set(summaryBytes);
  return buffer;
}

/** Validate a command against the documented schema before sending. */
export function validateCommand(cmd: PreviewCommand): string | null {
  switch (cmd.type) {
    case "apply_point_force": {
      const fields = [cmd.x_px, cmd.y_px, cmd.dir_x, cmd.dir_y, cmd.strength];
      if (fields.some((v) => typeof v !== "number" || !Number.isFinite(v))) {
        return "apply_point_force requires finite x_px, y_px, dir_x, dir_y, strength";
      }
      return null;
    }
    case "toggle_field":
      return Number.isInteger(cmd.field_index)
        ? null
        : "toggle_field requires an integer field_index";
    case "set_camera_mode":
      return (CAMERA_MODES as readonly string[]).includes(cmd.mode)
        ? null
        : `unknown camera mode ${cmd.mode}`;
    case "set_timescale":
      return typeof cmd.timescale === "number" &&
        cmd.timescale > 0 &&
        cmd.timescale <= 100
        ? null
        : "timescale must be in (0, 100]";
    case "pause":
    case "resume":
    case "reset":
      return null;
    default:
      return `unknown command type ${(cmd as { type?: string }).type}`;
  }
}

export function serializeCommand(cmd: PreviewCommand): string {
  const problem = validateCommand(cmd);
  if (problem) {
    throw new ProtocolError(problem);
  }
  return JSON.stringify(cmd);
}
