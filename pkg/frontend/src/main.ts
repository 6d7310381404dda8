/**
 * Thin DOM wiring. All decision logic lives in the pure modules; this file
 * only connects pointer/keyboard events to them, so it is exercised by hand
 * rather than by the test suite.
 */

import { FeedbackApi } from './api.js'
import { denormalize, normalizeDrag, type DragState } from './bbox.js'
import { initialDashboard, pollUntilIdle, triggerUpdate } from './dashboard.js'
import { openPanel, reorder, submitPanel, toggleFlag, canSubmit } from './ranking.js'
import { ReviewQueue } from './review.js'

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing element #${id}`)
  return node as T
}

export function mount(endpoint: string, imageIds: string[]): void {
  const api = new FeedbackApi(endpoint)
  const queue = new ReviewQueue(api)
  queue.enqueue(imageIds)

  const canvas = el<HTMLCanvasElement>('bbox-canvas')
  const captionInput = el<HTMLInputElement>('caption-edit')
  const labelInput = el<HTMLInputElement>('bbox-label')
  const statusLine = el<HTMLElement>('status')
  const dashboard = initialDashboard()

  let drag: DragState | null = null

  const redraw = () => {
    const ctx = canvas.getContext('2d')
    if (!ctx) return
    ctx.clearRect(0, 0, canvas.width, canvas.height)
    ctx.strokeStyle = '#2b8a3e'
    for (const box of queue.current?.pendingBoxes ?? []) {
      const r = denormalize(box, canvas.width, canvas.height)
      ctx.strokeRect(r.x, r.y, r.w, r.h)
    }
  }

  canvas.addEventListener('pointerdown', (e) => {
    drag = { startX: e.offsetX, startY: e.offsetY, currentX: e.offsetX, currentY: e.offsetY }
  })
  canvas.addEventListener('pointermove', (e) => {
    if (drag) {
      drag.currentX = e.offsetX
      drag.currentY = e.offsetY
    }
  })
  canvas.addEventListener('pointerup', () => {
    if (drag) {
      queue.addBox(normalizeDrag(drag, canvas.width, canvas.height, labelInput.value || null))
      drag = null
      redraw()
    }
  })

  captionInput.addEventListener('input', () => queue.edit(captionInput.value))

  el<HTMLButtonElement>('submit').addEventListener('click', async () => {
    await queue.submitCurrent()
    statusLine.textContent = queue.current?.error ?? 'submitted'
    queue.advance()
    await queue.loadCurrent()
    captionInput.value = queue.current?.editBuffer ?? ''
    redraw()
  })

  el<HTMLButtonElement>('run-update').addEventListener('click', async () => {
    const button = el<HTMLButtonElement>('run-update')
    button.disabled = true
    await triggerUpdate(dashboard, api)
    if (dashboard.updating) await pollUntilIdle(dashboard, api)
    statusLine.textContent = dashboard.statusMessage
    button.disabled = false
  })

  el<HTMLElement>('ranking-panel').addEventListener('click', async (e) => {
    const target = e.target as HTMLElement
    const setId = target.dataset.setId
    if (!setId) return
    const sets = await api.augmentations(queue.current?.imageId ?? '')
    const set = sets.find((s) => s.set_id === setId)
    if (!set) return
    const panel = openPanel(set, target.dataset.mode === 'flag' ? 'flag' : 'rank')
    if (target.dataset.from && target.dataset.to) {
      reorder(panel, Number(target.dataset.from), Number(target.dataset.to))
    }
    if (target.dataset.flag && target.dataset.augId) {
      toggleFlag(panel, target.dataset.augId, target.dataset.flag as 'good' | 'bad')
    }
    if (canSubmit(panel)) await submitPanel(panel, api)
  })

  void queue.loadCurrent().then(() => {
    captionInput.value = queue.current?.editBuffer ?? ''
    redraw()
  })
}
