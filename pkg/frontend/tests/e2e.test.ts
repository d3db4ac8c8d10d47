// End-to-end UI contract: a full 3-pair session against a real study
// service process (view -> window/level drag -> rate -> submit x3 ->
// completion screen), then the server log is checked for exactly three
// records with monotone timestamps and the scores entered here.

import { ChildProcess, execFileSync, spawn } from 'node:child_process'
import { mkdtempSync, readFileSync, rmSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { App } from '../src/app.js'
import { StudyApi } from '../src/api.js'
import { GrayImage } from '../src/render.js'

const PORT = 8277
const BASE = `http://127.0.0.1:${PORT}`

let studyDir: string
let server: ChildProcess

const MAKE_STUDY = `
import json, sys
import numpy as np
from pathlib import Path
from coordsr.mrisim import save_image_png

out = Path(sys.argv[1])
pairs_dir = out / "pairs"
pairs_dir.mkdir(parents=True)
rng = np.random.default_rng(0)
pairs, key_pairs = [], {}
for i in range(3):
    pid = f"p{i:03d}"
    for side in ("left", "right"):
        save_image_png(pairs_dir / f"{pid}_{side}.png", rng.uniform(0, 1, (16, 16)))
    pairs.append({"id": pid, "left_url": f"/pairs/{pid}_left.png",
                  "right_url": f"/pairs/{pid}_right.png"})
    key_pairs[pid] = {"item": f"i{i}", "left": "a" if i % 2 == 0 else "b",
                      "right": "b" if i % 2 == 0 else "a"}
(out / "study.json").write_text(json.dumps(
    {"study_id": "study", "seed": 5, "pairs": pairs}))
(out / "key.json").write_text(json.dumps(
    {"methods": {"a": "m-a", "b": "m-b"}, "pairs": key_pairs}))
`

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/pairs/p000_left.png`)
      if (resp.ok) return
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 150))
  }
  throw new Error('study service did not come up')
}

beforeAll(async () => {
  studyDir = mkdtempSync(join(tmpdir(), 'study-e2e-'))
  execFileSync('python3', ['-c', MAKE_STUDY, studyDir])
  server = spawn('python3', [
    '-m', 'coordsr.study_service',
    '--study-dir', studyDir,
    '--key-file', join(studyDir, 'key.json'),
    '--port', String(PORT),
  ], { stdio: 'ignore' })
  await waitForServer()
})

afterAll(() => {
  server?.kill('SIGKILL')
  rmSync(studyDir, { recursive: true, force: true })
})

function clickScore(criterion: string, score: number) {
  const radio = document.querySelector(
    `input[name="${criterion}"][value="${score}"]`,
  ) as HTMLInputElement
  radio.checked = true
  radio.dispatchEvent(new Event('change', { bubbles: true }))
}

describe('full reader session against a live service', () => {
  it('completes 3 pairs and the log holds exactly those records', async () => {
    const fetched: string[] = []
    const loadImage = async (url: string): Promise<GrayImage> => {
      const resp = await fetch(BASE + url)
      if (!resp.ok) throw new Error(`image fetch failed: ${url}`)
      fetched.push(url)
      return { width: 16, height: 16, data: new Float32Array(256).fill(0.5) }
    }

    const root = document.createElement('div')
    document.body.replaceChildren(root)
    const app = new App(root, {
      api: new StudyApi(BASE, fetch.bind(globalThis)),
      loadImage,
      studyId: 'study',
    })
    ;(app.el('rater-input') as HTMLInputElement).value = 'e2e-reader'
    await app.startSession()
    expect(app.sessionId).not.toBe('')

    const scores: Array<[number, number]> = [[2, 4], [1, 5], [3, 3]]
    const submitted: Array<{ pair: string; s: number; n: number }> = []
    for (let i = 0; i < 3; i++) {
      expect(app.phase).toBe('viewing')
      expect(app.el('progress').textContent).toBe(`Pair ${i + 1} of 3`)

      // window/level drag on the left pane (shift-drag), synced across panes
      const before = app.view.windowWidth
      app.el('left-canvas').dispatchEvent(new MouseEvent('mousedown', {
        clientX: 0, clientY: 0, shiftKey: true, bubbles: true,
      }))
      document.dispatchEvent(new MouseEvent('mousemove', {
        clientX: 40, clientY: 10, bubbles: true,
      }))
      document.dispatchEvent(new MouseEvent('mouseup', { bubbles: true }))
      expect(app.view.windowWidth).not.toBe(before)

      const [s, n] = scores[i]
      submitted.push({ pair: app.pair!.pair_id, s, n })
      clickScore('sharpness', s)
      clickScore('noise', n)
      expect((app.el('submit-btn') as HTMLButtonElement).disabled).toBe(false)
      await app.submit()
    }

    expect(app.phase).toBe('done')
    expect((app.el('done-screen') as HTMLElement).hidden).toBe(false)
    expect(app.el('session-id').textContent).toBe(app.sessionId)
    expect(fetched.length).toBe(6) // two real image fetches per pair

    const log = readFileSync(join(studyDir, 'responses.jsonl'), 'utf-8')
      .trim().split('\n').map((line) => JSON.parse(line))
    const responses = log.filter((rec) => rec.type === 'response')
    expect(responses.length).toBe(3)
    for (let i = 0; i < 3; i++) {
      expect(responses[i].session_id).toBe(app.sessionId)
      expect(responses[i].pair_id).toBe(submitted[i].pair)
      expect(responses[i].sharpness).toBe(submitted[i].s)
      expect(responses[i].noise).toBe(submitted[i].n)
      expect(responses[i].submitted_at).toBeGreaterThanOrEqual(responses[i].served_at)
      if (i > 0) {
        expect(responses[i].submitted_at).toBeGreaterThanOrEqual(
          responses[i - 1].submitted_at)
      }
    }

    // blinding holds across everything the browser saw
    const everything = JSON.stringify(log.filter((r) => r.type === 'session'))
    expect(everything).not.toContain('m-a')
    expect(everything).not.toContain('m-b')
  })
})
