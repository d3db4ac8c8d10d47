// Shared view state for the two panes: zoom, pan, and window/level.
// Displayed intensity = clamp((pixel - (center - width/2)) / width, 0, 1).

export type ViewState = {
  zoom: number
  panX: number
  panY: number
  windowCenter: number
  windowWidth: number
}

export const MIN_ZOOM = 0.25
export const MAX_ZOOM = 32
export const MIN_WINDOW_WIDTH = 0.01

export function defaultView(): ViewState {
  // full intensity range on [0, 1] images
  return { zoom: 1, panX: 0, panY: 0, windowCenter: 0.5, windowWidth: 1 }
}

export function displayIntensity(pixel: number, center: number, width: number): number {
  const v = (pixel - (center - width / 2)) / width
  return v < 0 ? 0 : v > 1 ? 1 : v
}

/** Window/level a grayscale [0,1] image into opaque RGBA bytes. */
export function applyWindowLevel(
  gray: Float32Array,
  center: number,
  width: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(gray.length * 4)
  const lo = center - width / 2
  for (let i = 0; i < gray.length; i++) {
    let v = (gray[i] - lo) / width
    v = v < 0 ? 0 : v > 1 ? 1 : v
    const byte = Math.round(v * 255)
    const o = i * 4
    out[o] = byte
    out[o + 1] = byte
    out[o + 2] = byte
    out[o + 3] = 255
  }
  return out
}

export function panBy(view: ViewState, dx: number, dy: number): ViewState {
  return { ...view, panX: view.panX + dx, panY: view.panY + dy }
}

export function zoomBy(view: ViewState, factor: number): ViewState {
  const zoom = Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, view.zoom * factor))
  return { ...view, zoom }
}

/** Radiology-style drag mapping: horizontal adjusts width, vertical center. */
export function windowLevelBy(view: ViewState, dx: number, dy: number): ViewState {
  const windowWidth = Math.max(MIN_WINDOW_WIDTH, view.windowWidth * Math.exp(dx / 200))
  const windowCenter = view.windowCenter + dy / 400
  return { ...view, windowWidth, windowCenter }
}
