import { describe, expect, it } from "vitest";

import { DragTracker } from "../src/gestures.js";

describe("drag-to-force", () => {
  it("converts a rightward drag into a unit +x command", () => {
    const tracker = new DragTracker();
    tracker.press(120, 200);
    const cmd = tracker.release(220, 200);
    expect(cmd).not.toBeNull();
    if (cmd && cmd.type === "apply_point_force") {
      expect(cmd.x_px).toBe(120);
      expect(cmd.y_px).toBe(200);
      expect(cmd.dir_x).toBeCloseTo(1.0);
      expect(cmd.dir_y).toBeCloseTo(0.0);
      expect(cmd.strength).toBeCloseTo(100 * 0.02);
    }
  });

  it("normalizes diagonal drags", () => {
    const tracker = new DragTracker();
    tracker.press(0, 0);
    const cmd = tracker.release(30, 40); // 3-4-5 triangle
    if (cmd && cmd.type === "apply_point_force") {
      expect(cmd.dir_x).toBeCloseTo(0.6);
      expect(cmd.dir_y).toBeCloseTo(0.8);
      expect(cmd.strength).toBeCloseTo(50 * 0.02);
    } else {
      throw new Error("expected a command");
    }
  });

  it("ignores clicks without movement", () => {
    const tracker = new DragTracker();
    tracker.press(10, 10);
    expect(tracker.release(10, 10)).toBeNull();
  });

  it("clamps very long drags to the maximum strength", () => {
    const tracker = new DragTracker(0.02, 4.0);
    tracker.press(0, 0);
    const cmd = tracker.release(10_000, 0);
    if (cmd && cmd.type === "apply_point_force") {
      expect(cmd.strength).toBe(4.0);
    } else {
      throw new Error("expected a command");
    }
  });

  it("release without press does nothing", () => {
    const tracker = new DragTracker();
    expect(tracker.release(5, 5)).toBeNull();
  });

  it("cancel discards the active gesture", () => {
    const tracker = new DragTracker();
    tracker.press(1, 1);
    tracker.cancel();
    expect(tracker.isActive).toBe(false);
    expect(tracker.release(50, 50)).toBeNull();
  });
});
