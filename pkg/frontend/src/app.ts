// Reader-study single-page app: blinded side-by-side viewing with
// synchronized zoom/pan/window-level, two 5-point Likert criteria, and
// one in-flight submission at a time (viewing -> submitting -> advancing).

import { PairInfo, StudyApi, SubmitResult } from './api.js'
import { GrayImage, PairRenderer, loadGrayImage } from './render.js'
import {
  ViewState,
  defaultView,
  panBy,
  windowLevelBy,
  zoomBy,
} from './view.js'

export type Phase = 'setup' | 'loading' | 'viewing' | 'submitting' | 'done' | 'error'

const CRITERIA = ['sharpness', 'noise'] as const
export type Criterion = (typeof CRITERIA)[number]

type Deps = {
  api: StudyApi
  loadImage: (url: string) => Promise<GrayImage>
  studyId: string
}

export class App {
  phase: Phase = 'setup'
  view: ViewState = defaultView()
  sessionId = ''
  pair: PairInfo | null = null
  scores: Partial<Record<Criterion, number>> = {}
  activeCriterion: Criterion = 'sharpness'

  private renderer: PairRenderer | null = null
  private deps: Deps
  private root: HTMLElement

  constructor(root: HTMLElement, deps?: Partial<Deps>) {
    this.root = root
    this.deps = {
      api: deps?.api ?? new StudyApi(),
      loadImage: deps?.loadImage ?? loadGrayImage,
      studyId: deps?.studyId ?? 'study',
    }
    this.buildDom()
  }

  // ----------------------------------------------------------- DOM set-up

  private buildDom(): void {
    this.root.innerHTML = `
      <div id="setup-screen">
        <h1>Image comparison session</h1>
        <label>Reader name <input id="rater-input" type="text" autocomplete="off"></label>
        <button id="start-btn">Start session</button>
        <div id="setup-error" class="error" hidden></div>
      </div>
      <div id="study-screen" hidden>
        <div id="progress"></div>
        <div id="panes">
          <canvas id="left-canvas" width="420" height="420"></canvas>
          <canvas id="right-canvas" width="420" height="420"></canvas>
        </div>
        <div id="load-error" class="error" hidden>
          Image failed to load. <button id="reload-btn">Retry</button>
        </div>
        <div id="rating">
          <fieldset id="sharpness-group">
            <legend>Sharpness <span id="sharpness-anchor" class="anchor"></span></legend>
          </fieldset>
          <fieldset id="noise-group">
            <legend>Noise <span id="noise-anchor" class="anchor"></span></legend>
          </fieldset>
          <button id="submit-btn" disabled>Submit rating</button>
          <div id="submit-error" class="error" hidden>
            Submission failed. <button id="retry-btn">Retry</button>
          </div>
        </div>
        <p class="hint">drag: pan &middot; wheel: zoom &middot; shift-drag: window/level
          &middot; keys 1-5 / Tab / Enter</p>
      </div>
      <div id="done-screen" hidden>
        <h1>Session complete</h1>
        <p>All pairs rated. Thank you!</p>
        <p>Session id: <code id="session-id"></code></p>
      </div>`
    for (const criterion of CRITERIA) {
      const group = this.el(`${criterion}-group`)
      for (let score = 1; score <= 5; score++) {
        const label = this.root.ownerDocument.createElement('label')
        label.innerHTML =
          `<input type="radio" name="${criterion}" value="${score}"> ${score}`
        group.appendChild(label)
      }
      group.addEventListener('change', (ev) => {
        const input = ev.target as HTMLInputElement
        this.setScore(criterion, Number(input.value))
      })
    }
    this.el('start-btn').addEventListener('click', () => void this.startSession())
    this.el('submit-btn').addEventListener('click', () => void this.submit())
    this.el('retry-btn').addEventListener('click', () => void this.submit())
    this.el('reload-btn').addEventListener('click', () => void this.loadCurrentPair())
    this.root.ownerDocument.addEventListener('keydown', (ev) => this.onKey(ev))
    this.bindPointer()
    this.renderer = new PairRenderer(
      this.el('left-canvas') as HTMLCanvasElement,
      this.el('right-canvas') as HTMLCanvasElement,
    )
  }

  el(id: string): HTMLElement {
    const found = this.root.querySelector(`#${id}`)
    if (!found) throw new Error(`missing element #${id}`)
    return found as HTMLElement
  }

  // --------------------------------------------------------- state machine

  async startSession(): Promise<void> {
    const rater = (this.el('rater-input') as HTMLInputElement).value.trim()
    if (!rater) {
      this.showError('setup-error', 'Please enter a reader name.')
      return
    }
    try {
      const session = await this.deps.api.createSession(rater, this.deps.studyId)
      this.sessionId = session.session_id
    } catch (err) {
      this.showError('setup-error', String(err))
      return
    }
    this.el('setup-screen').hidden = true
    this.el('study-screen').hidden = false
    await this.advance()
  }

  /** Fetch the current pair (or finish) and load its images. */
  async advance(): Promise<void> {
    this.phase = 'loading'
    let pair: PairInfo | null
    try {
      pair = await this.deps.api.nextPair(this.sessionId)
    } catch (err) {
      this.phase = 'error'
      this.showError('submit-error', String(err))
      return
    }
    if (pair === null) {
      this.phase = 'done'
      this.el('study-screen').hidden = true
      const done = this.el('done-screen')
      done.hidden = false
      this.el('session-id').textContent = this.sessionId
      return
    }
    this.pair = pair
    this.resetRating()
    this.view = defaultView() // fresh zoom/pan/window for every pair
    this.el('progress').textContent = `Pair ${pair.index + 1} of ${pair.total}`
    if (pair.anchors) {
      this.el('sharpness-anchor').textContent = pair.anchors['sharpness'] ?? ''
      this.el('noise-anchor').textContent = pair.anchors['noise'] ?? ''
    }
    await this.loadCurrentPair()
  }

  async loadCurrentPair(): Promise<void> {
    if (!this.pair) return
    this.el('load-error').hidden = true
    try {
      const [left, right] = await Promise.all([
        this.deps.loadImage(this.pair.left_url),
        this.deps.loadImage(this.pair.right_url),
      ])
      this.renderer?.setImages(left, right)
      this.redraw()
      this.phase = 'viewing'
    } catch {
      this.el('load-error').hidden = false
      this.phase = 'error'
    }
  }

  setScore(criterion: Criterion, score: number): void {
    if (this.phase !== 'viewing' && this.phase !== 'error') return
    this.scores[criterion] = score
    const radio = this.root.querySelector(
      `input[name="${criterion}"][value="${score}"]`,
    ) as HTMLInputElement | null
    if (radio) radio.checked = true
    this.updateSubmitButton()
  }

  private updateSubmitButton(): void {
    const complete = CRITERIA.every((c) => this.scores[c] !== undefined)
    ;(this.el('submit-btn') as HTMLButtonElement).disabled =
      !complete || this.phase === 'submitting'
  }

  /** Submit once; double-clicks are ignored while a request is in flight. */
  async submit(): Promise<void> {
    if (this.phase !== 'viewing' && this.phase !== 'error') return
    const { sharpness, noise } = this.scores
    if (!this.pair || sharpness === undefined || noise === undefined) return
    this.phase = 'submitting'
    this.updateSubmitButton()
    this.el('submit-error').hidden = true
    let result: SubmitResult
    try {
      result = await this.deps.api.submitResponse(
        this.sessionId, this.pair.pair_id, sharpness, noise)
    } catch {
      // network failure: keep the selection, surface a retry banner
      this.phase = 'viewing'
      this.updateSubmitButton()
      this.el('submit-error').hidden = false
      return
    }
    if (result.kind === 'ok' || result.kind === 'conflict') {
      // conflict means the server already has this pair recorded; move on
      await this.advance()
      return
    }
    this.phase = 'viewing'
    this.updateSubmitButton()
    this.showError('submit-error', `Rejected: ${result.detail}`)
  }

  private resetRating(): void {
    this.scores = {}
    this.activeCriterion = 'sharpness'
    for (const input of Array.from(
      this.root.querySelectorAll('input[type="radio"]'),
    )) {
      ;(input as HTMLInputElement).checked = false
    }
    this.el('submit-error').hidden = true
    this.updateSubmitButton()
  }

  private showError(id: string, message: string): void {
    const box = this.el(id)
    box.hidden = false
    if (id === 'setup-error') box.textContent = message
  }

  // ------------------------------------------------------------- controls

  onKey(ev: KeyboardEvent): void {
    if (this.phase !== 'viewing') return
    if (ev.key >= '1' && ev.key <= '5') {
      this.setScore(this.activeCriterion, Number(ev.key))
      ev.preventDefault()
    } else if (ev.key === 'Tab') {
      this.activeCriterion = this.activeCriterion === 'sharpness' ? 'noise' : 'sharpness'
      ev.preventDefault()
    } else if (ev.key === 'Enter') {
      void this.submit()
      ev.preventDefault()
    }
  }

  private bindPointer(): void {
    let dragging: 'pan' | 'window' | null = null
    let lastX = 0
    let lastY = 0
    for (const id of ['left-canvas', 'right-canvas']) {
      const canvas = this.el(id)
      canvas.addEventListener('mousedown', (ev) => {
        const mouse = ev as MouseEvent
        dragging = mouse.shiftKey || mouse.button === 2 ? 'window' : 'pan'
        lastX = mouse.clientX
        lastY = mouse.clientY
        ev.preventDefault()
      })
      canvas.addEventListener('contextmenu', (ev) => ev.preventDefault())
      canvas.addEventListener('wheel', (ev) => {
        const wheel = ev as WheelEvent
        this.view = zoomBy(this.view, wheel.deltaY < 0 ? 1.25 : 0.8)
        this.redraw()
        ev.preventDefault()
      })
    }
    const doc = this.root.ownerDocument
    doc.addEventListener('mousemove', (ev) => {
      if (!dragging) return
      const dx = ev.clientX - lastX
      const dy = ev.clientY - lastY
      lastX = ev.clientX
      lastY = ev.clientY
      this.view = dragging === 'pan'
        ? panBy(this.view, dx, dy)
        : windowLevelBy(this.view, dx, dy)
      this.redraw()
    })
    doc.addEventListener('mouseup', () => {
      dragging = null
    })
  }

  redraw(): void {
    this.renderer?.draw(this.view)
  }
}
