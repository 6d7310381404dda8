/**
 * Review queue state: one item per queued image, with an edit buffer for the
 * predicted caption and a pending bbox list. Accepting an unedited caption
 * sends nothing; only real edits become caption_correction events.
 */

import type { FeedbackApi, PredictResponse } from './api.js'
import type { NormalizedBox } from './bbox.js'

export type SubmissionStatus = 'idle' | 'pending' | 'done' | 'error'

export interface ReviewItem {
  imageId: string
  predicted: PredictResponse | null
  editBuffer: string
  pendingBoxes: NormalizedBox[]
  status: SubmissionStatus
  error: string | null
}

export function emptyItem(imageId: string): ReviewItem {
  return {
    imageId,
    predicted: null,
    editBuffer: '',
    pendingBoxes: [],
    status: 'idle',
    error: null,
  }
}

export class ReviewQueue {
  readonly items: ReviewItem[] = []
  cursor = 0

  constructor(private readonly api: FeedbackApi) {}

  get current(): ReviewItem | null {
    return this.items[this.cursor] ?? null
  }

  get isEmpty(): boolean {
    return this.items.length === 0
  }

  enqueue(imageIds: string[]): void {
    for (const id of imageIds) this.items.push(emptyItem(id))
  }

  async loadCurrent(): Promise<void> {
    const item = this.current
    if (!item) return
    try {
      item.predicted = await this.api.predict(item.imageId)
      item.editBuffer = item.predicted.caption
      item.error = null
    } catch (err) {
      item.error = err instanceof Error ? err.message : String(err)
    }
  }

  edit(text: string): void {
    const item = this.current
    if (item) item.editBuffer = text
  }

  addBox(box: NormalizedBox | null): void {
    // degenerate drags arrive as null and are dropped silently
    const item = this.current
    if (item && box) item.pendingBoxes.push(box)
  }

  /**
   * Submit the current item. An unchanged edit buffer is an accept: no
   * correction is sent. Pending boxes are always flushed.
   */
  async submitCurrent(): Promise<void> {
    const item = this.current
    if (!item || item.predicted === null) return
    item.status = 'pending'
    try {
      if (item.editBuffer !== item.predicted.caption) {
        await this.api.submitCorrection(item.imageId, item.editBuffer)
      }
      for (const box of item.pendingBoxes) {
        await this.api.submitBbox(item.imageId, box)
      }
      item.pendingBoxes = []
      item.status = 'done'
      item.error = null
    } catch (err) {
      item.status = 'error'
      item.error = err instanceof Error ? err.message : String(err)
    }
  }

  advance(): void {
    if (this.cursor < this.items.length) this.cursor += 1
  }
}
