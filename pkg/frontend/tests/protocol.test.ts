import { describe, expect, it } from "vitest";

import {
  ProtocolError,
  decodeFrameMessage,
  encodeFrameMessage,
  serializeCommand,
  validateCommand,
} from "../src/protocol.js";

// Byte-for-byte frame emitted by the service for:
//   index 42, timestamp 1723275000.25, png b"\x89PNGfake",
//   summary {sim_frame: 7, sim_time: 0.028, objects: 2,
//            active_fields: [0], paused: false}
const SERVICE_FIXTURE_HEX =
  "012a000000000010bec5add9410800000089504e4766616b65580000007b2273696d5f" +
  "6672616d65223a20372c202273696d5f74696d65223a20302e3032382c20226f626a65" +
  "637473223a20322c20226163746976655f6669656c6473223a205b305d2c2022706175" +
  "736564223a2066616c73657d";

function hexToBuffer(hex: string): ArrayBuffer {
  const bytes = new Uint8Array(hex.length / 2);
  for (let i = 0; i < bytes.length; i += 1) {
    bytes[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return bytes.buffer;
}

describe("frame decoding", () => {
  it("decodes the service-generated fixture byte-for-byte", () => {
    const frame = decodeFrameMessage(hexToBuffer(SERVICE_FIXTURE_HEX));
    expect(frame.index).toBe(42);
    expect(frame.timestamp).toBeCloseTo(1723275000.25, 6);
    expect(frame.png[0]).toBe(0x89);
    expect(new TextDecoder().decode(frame.png.slice(1))).toBe("PNGfake");
    expect(frame.summary.sim_frame).toBe(7);
    expect(frame.summary.sim_time).toBeCloseTo(0.028);
    expect(frame.summary.objects).toBe(2);
    expect(frame.summary.active_fields).toEqual([0]);
    expect(frame.summary.paused).toBe(false);
  });

  it("round-trips through the local encoder", () => {
    const png = new Uint8Array([1, 2, 3, 4, 5]);
    const buffer = encodeFrameMessage(9, 12.5, png, {
      sim_frame: 9,
      sim_time: 0.036,
      objects: 1,
      active_fields: [],
      paused: true,
    });
    const frame = decodeFrameMessage(buffer);
    expect(frame.index).toBe(9);
    expect(Array.from(frame.png)).toEqual([1, 2, 3, 4, 5]);
    expect(frame.summary.paused).toBe(true);
  });

  it("rejects wrong message types and truncated payloads", () => {
    const good = encodeFrameMessage(0, 0, new Uint8Array([7]), { a: 1 });
    const bad = new Uint8Array(good.slice(0));
    bad[0] = 0x7f;
    expect(() => decodeFrameMessage(bad.buffer)).toThrow(ProtocolError);
    expect(() => decodeFrameMessage(good.slice(0, 16))).toThrow(
      ProtocolError,
    );
  });
});

describe("command validation", () => {
  it("accepts every documented command shape", () => {
    expect(validateCommand({ type: "pause" })).toBeNull();
    expect(validateCommand({ type: "resume" })).toBeNull();
    expect(validateCommand({ type: "reset" })).toBeNull();
    expect(validateCommand({ type: "toggle_field", field_index: 2 })).toBeNull();
    expect(
      validateCommand({ type: "set_camera_mode", mode: "orbit_yz_cw" }),
    ).toBeNull();
    expect(
      validateCommand({ type: "set_timescale", timescale: 2.0 }),
    ).toBeNull();
    expect(
      validateCommand({
        type: "apply_point_force",
        x_px: 10,
        y_px: 20,
        dir_x: 1,
        dir_y: 0,
        strength: 0.5,
      }),
    ).toBeNull();
  });

  it("rejects malformed payloads before they reach the wire", () => {
    expect(
      validateCommand({
        type: "apply_point_force",
        x_px: NaN,
        y_px: 0,
        dir_x: 1,
        dir_y: 0,
        strength: 1,
      }),
    ).toMatch(/finite/);
    expect(
      validateCommand({
        type: "set_camera_mode",
        mode: "barrel_roll" as never,
      }),
    ).toMatch(/unknown camera mode/);
    expect(
      validateCommand({ type: "set_timescale", timescale: 0 }),
    ).toMatch(/timescale/);
    expect(() =>
      serializeCommand({ type: "set_timescale", timescale: -3 }),
    ).toThrow(ProtocolError);
  });

  it("serializes with the documented field names", () => {
    const text = serializeCommand({
      type: "apply_point_force",
      x_px: 120,
      y_px: 200,
      dir_x: 1,
      dir_y: 0,
      strength: 2,
    });
    const parsed = JSON.parse(text);
    expect(Object.keys(parsed).sort()).toEqual([
      "dir_x",
      "dir_y",
      "strength",
      "type",
      "x_px",
      "y_px",
    ]);
  });
});
