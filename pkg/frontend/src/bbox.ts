/**
 * Bounding-box drag math.
 *
 * The canvas works in render pixels; the service speaks normalized [0,1]
 * coordinates. Both directions go through here so the round-trip error at
 * native resolution stays within one pixel.
 */

export interface PixelRect {
  x: number
  y: number
  w: number
  h: number
}

export interface NormalizedBox {
  x: number
  y: number
  w: number
  h: number
  label: string | null
}

export interface DragState {
  startX: number
  startY: number
  currentX: number
  currentY: number
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v))

/** Rectangle spanned by a drag, regardless of direction. */
export function dragToRect(drag: DragState): PixelRect {
  const x = Math.min(drag.startX, drag.currentX)
  const y = Math.min(drag.startY, drag.currentY)
  return {
    x,
    y,
    w: Math.abs(drag.currentX - drag.startX),
    h: Math.abs(drag.currentY - drag.startY),
  }
}

/**
 * Convert a finished drag to a normalized box, or null for degenerate drags
 * (zero width or height, e.g. a plain click). Off-canvas portions are
 * clamped into [0,1].
 */
export function normalizeDrag(
  drag: DragState,
  renderWidth: number,
  renderHeight: number,
  label: string | null = null,
): NormalizedBox | null {
  if (renderWidth <= 0 || renderHeight <= 0) {
    throw new Error(`render size must be positive, got ${renderWidth}x${renderHeight}`)
  }
  const rect = dragToRect(drag)
  const x0 = clamp01(rect.x / renderWidth)
  const y0 = clamp01(rect.y / renderHeight)
  const x1 = clamp01((rect.x + rect.w) / renderWidth)
  const y1 = clamp01((rect.y + rect.h) / renderHeight)
  const w = x1 - x0
  const h = y1 - y0
  if (w <= 0 || h <= 0) return null
  return { x: x0, y: y0, w, h, label }
}

/** Map a normalized box back to render pixels for display. */
export function denormalize(box: NormalizedBox, renderWidth: number, renderHeight: number): PixelRect {
  return {
    x: box.x * renderWidth,
    y: box.y * renderHeight,
    w: box.w * renderWidth,
    h: box.h * renderHeight,
  }
}

/** Largest coordinate difference between two pixel rects, in pixels. */
export function roundTripError(a: PixelRect, b: PixelRect): number {
  return Math.max(
    Math.abs(a.x - b.x),
    Math.abs(a.y - b.y),
    Math.abs(a.w - b.w),
    Math.abs(a.h - b.h),
  )
}
