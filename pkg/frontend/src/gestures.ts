/** Drag-to-force gesture math: press, drag, release -> point-force command. */

import type { PreviewCommand } from "./protocol.js";

export const DEFAULT_STRENGTH_PER_PX = 0.02; // m/s of impulse per pixel of drag
export const DEFAULT_MAX_STRENGTH = 4.0;

export interface DragState {
  startX: number;
  startY: number;
}

export class DragTracker {
  private active: DragState | null = null;

  constructor(
    public strengthPerPx: number = DEFAULT_STRENGTH_PER_PX,
    public maxStrength: number = DEFAULT_MAX_STRENGTH,
  ) {}

  press(x: number, y: number): void {
    this.active = { startX: x, startY: y };
  }

  cancel(): void {
    this.active = null;
  }

  get isActive(): boolean {
    return this.active !== null;
  }

  /**
   * Finish the gesture. Returns an apply_point_force command anchored at the
   * press pixel with the normalized drag direction; strength grows with drag
   * length and clamps at maxStrength. Zero-length drags produce nothing.
   */
  release(x: number, y: number): PreviewCommand | null {
    if (!this.active) {
      return null;
    }
    const { startX, startY } = this.active;
    this.active = null;
    const dx = x - startX;
    const dy = y - startY;
    const length = Math.hypot(dx, dy);
    if (length < 1e-9) {
      return null;
    }
    return {
      type: "apply_point_force",
      x_px: startX,
      y_px: startY,
      dir_x: dx / length,
      dir_y: dy / length,
      strength: Math.min(length * this.strengthPerPx, this.maxStrength),
    };
  }
}
