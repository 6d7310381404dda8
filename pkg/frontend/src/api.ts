/**
 * Typed client for the feedback service HTTP API.
 *
 * The fetch implementation is injected so tests can capture request bytes;
 * payload builders are exported separately because the contract tests pin
 * their exact serialized form.
 */

import type { NormalizedBox } from './bbox.js'

export interface PredictResponse {
  caption: string
  tokens: string[]
  attention_summary: number[]
  event_id: string
}

export interface AugmentationVariant {
  augmentation_id: string
  kind: 'text' | 'image'
  text?: string
  image_path?: string
  method_tag: string
  rating: 'good' | 'bad' | null
  rank: number | null
}

export interface AugmentationSet {
  set_id: string
  image_id: string
  source_caption_id: string | null
  variants: AugmentationVariant[]
}

export interface UpdateReport {
  task_id: number
  new_batches: number
  replay_batches: number
  final_loss: number | null
  checkpoint_hash: string
  pre_bleu4: number | null
  post_bleu4: number | null
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`)
  }
}

// Builders return the exact string sent over the wire. Key order is part of
// the contract tests, so objects are assembled literally, never spread.

export function predictPayload(imageId: string): string {
  return JSON.stringify({ image_id: imageId })
}

export function correctionPayload(imageId: string, text: string): string {
  return JSON.stringify({
    image_id: imageId,
    kind: 'caption_correction',
    payload: { text },
  })
}

export function bboxPayload(imageId: string, box: NormalizedBox): string {
  return JSON.stringify({
    image_id: imageId,
    kind: 'bbox_annotation',
    payload: { bbox: { x: box.x, y: box.y, w: box.w, h: box.h, label: box.label } },
  })
}

export function ratingsPayload(ratings: Record<string, 'good' | 'bad'>): string {
  return JSON.stringify({ ratings })
}

export function ranksPayload(ranks: Record<string, number>): string {
  return JSON.stringify({ ranks })
}

export class FeedbackApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async post<T>(path: string, body: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body,
    })
    return this.unwrap(resp)
  }

  private async unwrap<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      let detail = resp.statusText
      try {
        detail = (await resp.json()).detail ?? detail
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail)
    }
    return (await resp.json()) as T
  }

  predict(imageId: string): Promise<PredictResponse> {
    return this.post('/predict', predictPayload(imageId))
  }

  submitCorrection(imageId: string, text: string): Promise<{ event_id: string }> {
    return this.post('/feedback', correctionPayload(imageId, text))
  }

  submitBbox(imageId: string, box: NormalizedBox): Promise<{ event_id: string }> {
    return this.post('/feedback', bboxPayload(imageId, box))
  }

  async augmentations(imageId: string): Promise<AugmentationSet[]> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/augmentations?image_id=${encodeURIComponent(imageId)}`,
    )
    return this.unwrap(resp)
  }

  submitRatings(setId: string, ratings: Record<string, 'good' | 'bad'>): Promise<{ accepted: number }> {
    return this.post(`/augmentations/${setId}/ratings`, ratingsPayload(ratings))
  }

  submitRanks(setId: string, ranks: Record<string, number>): Promise<{ accepted: number }> {
    return this.post(`/augmentations/${setId}/ratings`, ranksPayload(ranks))
  }

  triggerUpdate(): Promise<UpdateReport> {
    return this.post('/update', JSON.stringify({}))
  }

  async metrics(): Promise<UpdateReport | null> {
    const resp = await this.fetchImpl(`${this.baseUrl}/metrics`)
    if (resp.status === 404) return null
    return this.unwrap(resp)
  }

  async health(): Promise<{ status: string; events: number }> {
    const resp = await this.fetchImpl(`${this.baseUrl}/health`)
    return this.unwrap(resp)
  }
}
