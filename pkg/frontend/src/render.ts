// Canvas rendering for the blinded pair: window/level per pixel, then
// nearest-neighbor magnification so the viewer never interpolates the
// detail being judged. Both panes always receive the identical transform.

import { applyWindowLevel, ViewState } from './view.js'

export type GrayImage = {
  width: number
  height: number
  data: Float32Array // row-major [0, 1]
}

/** getContext that degrades to null where canvas is unavailable (jsdom). */
function context2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  try {
    return canvas.getContext('2d')
  } catch {
    return null
  }
}

/** Browser loader: decode a PNG URL into grayscale floats via a canvas. */
export function loadGrayImage(url: string): Promise<GrayImage> {
  return new Promise((resolve, reject) => {
    const img = new Image()
    img.onload = () => {
      const canvas = document.createElement('canvas')
      canvas.width = img.naturalWidth
      canvas.height = img.naturalHeight
      const ctx = canvas.getContext('2d')
      if (!ctx) {
        reject(new Error('canvas 2d context unavailable'))
        return
      }
      ctx.drawImage(img, 0, 0)
      const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data
      const gray = new Float32Array(canvas.width * canvas.height)
      for (let i = 0; i < gray.length; i++) gray[i] = rgba[i * 4] / 255
      resolve({ width: canvas.width, height: canvas.height, data: gray })
    }
    img.onerror = () => reject(new Error(`failed to load ${url}`))
    img.src = url
  })
}

export class PaneRenderer {
  private backing: HTMLCanvasElement | null = null
  private image: GrayImage | null = null
  private lastWindow: { center: number; width: number } | null = null

  constructor(private canvas: HTMLCanvasElement) {}

  setImage(image: GrayImage): void {
    this.image = image
    this.backing = null
    this.lastWindow = null
  }

  /** Re-window into the backing canvas only when center/width changed. */
  private ensureBacking(view: ViewState): HTMLCanvasElement | null {
    if (!this.image) return null
    const doc = this.canvas.ownerDocument
    if (!this.backing) {
      this.backing = doc.createElement('canvas')
      this.backing.width = this.image.width
      this.backing.height = this.image.height
    }
    const needsWindow =
      !this.lastWindow ||
      this.lastWindow.center !== view.windowCenter ||
      this.lastWindow.width !== view.windowWidth
    if (needsWindow) {
      const ctx = context2d(this.backing)
      if (!ctx) return null
      const rgba = applyWindowLevel(this.image.data, view.windowCenter, view.windowWidth)
      const frame = ctx.createImageData(this.image.width, this.image.height)
      frame.data.set(rgba)
      ctx.putImageData(frame, 0, 0)
      this.lastWindow = { center: view.windowCenter, width: view.windowWidth }
    }
    return this.backing
  }

  draw(view: ViewState): void {
    const ctx = context2d(this.canvas)
    const backing = this.ensureBacking(view)
    if (!ctx || !backing || !this.image) return
    ctx.setTransform(1, 0, 0, 1, 0, 0)
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height)
    ctx.imageSmoothingEnabled = false // nearest-neighbor magnification
    const fit = Math.min(
      this.canvas.width / this.image.width,
      this.canvas.height / this.image.height,
    )
    const scale = fit * view.zoom
    const cx = this.canvas.width / 2 + view.panX
    const cy = this.canvas.height / 2 + view.panY
    ctx.setTransform(scale, 0, 0, scale, cx - (this.image.width * scale) / 2,
      cy - (this.image.height * scale) / 2)
    ctx.drawImage(backing, 0, 0)
  }
}

export class PairRenderer {
  readonly left: PaneRenderer
  readonly right: PaneRenderer

  constructor(leftCanvas: HTMLCanvasElement, rightCanvas: HTMLCanvasElement) {
    this.left = new PaneRenderer(leftCanvas)
    this.right = new PaneRenderer(rightCanvas)
  }

  setImages(left: GrayImage, right: GrayImage): void {
    this.left.setImage(left)
    this.right.setImage(right)
  }

  /** One state, two panes: zoom/pan/window always applied identically. */
  draw(view: ViewState): void {
    this.left.draw(view)
    this.right.draw(view)
  }
}
