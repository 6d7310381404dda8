import { describe, expect, it } from 'vitest'

import { FeedbackApi } from '../src/api.js'
import { ReviewQueue } from '../src/review.js'

interface Captured {
  url: string
  method: string
  body: string | undefined
}

function makeWorld(captions: Record<string, string>, failAfter = Infinity) {
  const captured: Captured[] = []
  let posts = 0
  const fetchImpl = async (url: string, init?: RequestInit) => {
    captured.push({ url, method: init?.method ?? 'GET', body: init?.body as string | undefined })
    if (url.endsWith('/predict')) {
      const { image_id } = JSON.parse(init?.body as string)
      return new Response(
        JSON.stringify({
          caption: captions[image_id],
          tokens: captions[image_id].split(' '),
          attention_summary: [],
          event_id: `evt-${image_id}`,
        }),
        { status: 200 },
      )
    }
    posts += 1
    if (posts > failAfter) {
      return new Response(JSON.stringify({ detail: 'log unavailable' }), { status: 500 })
    }
    return new Response(JSON.stringify({ event_id: `evt-${posts}` }), { status: 200 })
  }
  const api = new FeedbackApi('http://svc', fetchImpl)
  return { queue: new ReviewQueue(api), captured }
}

describe('ReviewQueue', () => {
  it('loads the prediction into the edit buffer', async () => {
    const { queue } = makeWorld({ a: 'a dog runs' })
    queue.enqueue(['a'])
    await queue.loadCurrent()
    expect(queue.current?.editBuffer).toBe('a dog runs')
    expect(queue.current?.predicted?.caption).toBe('a dog runs')
  })

  it('accepting an unedited caption sends nothing', async () => {
    const { queue, captured } = makeWorld({ a: 'a dog runs' })
    queue.enqueue(['a'])
    await queue.loadCurrent()
    await queue.submitCurrent()
    expect(queue.current?.status).toBe('done')
    const feedbackCalls = captured.filter((c) => c.url.endsWith('/feedback'))
    expect(feedbackCalls).toHaveLength(0)
  })

  it('an edited caption produces exactly one byte-exact correction', async () => {
    const { queue, captured } = makeWorld({ a: 'a dog runs' })
    queue.enqueue(['a'])
    await queue.loadCurrent()
    queue.edit('a brown dog runs')
    await queue.submitCurrent()
    const feedbackCalls = captured.filter((c) => c.url.endsWith('/feedback'))
    expect(feedbackCalls).toHaveLength(1)
    expect(feedbackCalls[0].method).toBe('POST')
    expect(feedbackCalls[0].body).toBe(
      '{"image_id":"a","kind":"caption_correction","payload":{"text":"a brown dog runs"}}',
    )
  })

  it('editing back to the original counts as an accept', async () => {
    const { queue, captured } = makeWorld({ a: 'a dog runs' })
    queue.enqueue(['a'])
    await queue.loadCurrent()
    queue.edit('a cat runs')
    queue.edit('a dog runs')
    await queue.submitCurrent()
    expect(captured.filter((c) => c.url.endsWith('/feedback'))).toHaveLength(0)
  })

  it('flushes pending boxes as byte-exact bbox events', async () => {
    const { queue, captured } = makeWorld({ a: 'a dog runs' })
    queue.enqueue(['a'])
    await queue.loadCurrent()
    queue.addBox({ x: 0.1, y: 0.2, w: 0.3, h: 0.4, label: 'dog' })
    queue.addBox({ x: 0.5, y: 0.5, w: 0.25, h: 0.25, label: null })
    await queue.submitCurrent()
    const feedbackCalls = captured.filter((c) => c.url.endsWith('/feedback'))
    expect(feedbackCalls.map((c) => c.body)).toEqual([
      '{"image_id":"a","kind":"bbox_annotation","payload":{"bbox":{"x":0.1,"y":0.2,"w":0.3,"h":0.4,"label":"dog"}}}',
      '{"image_id":"a","kind":"bbox_annotation","payload":{"bbox":{"x":0.5,"y":0.5,"w":0.25,"h":0.25,"label":null}}}',
    ])
    expect(queue.current?.pendingBoxes).toEqual([])
  })

  it('drops null boxes from degenerate drags', async () => {
    const { queue } = makeWorld({ a: 'a dog runs' })
    queue.enqueue(['a'])
    await queue.loadCurrent()
    queue.addBox(null)
    expect(queue.current?.pendingBoxes).toEqual([])
  })

  it('keeps edits and status on a failed submit', async () => {
    const { queue } = makeWorld({ a: 'a dog runs' }, 0)
    queue.enqueue(['a'])
    await queue.loadCurrent()
    queue.edit('a brown dog runs')
    await queue.submitCurrent()
    expect(queue.current?.status).toBe('error')
    expect(queue.current?.error).toMatch(/log unavailable/)
    expect(queue.current?.editBuffer).toBe('a brown dog runs')
  })

  it('advances through the queue', async () => {
    const { queue } = makeWorld({ a: 'one', b: 'two' })
    queue.enqueue(['a', 'b'])
    await queue.loadCurrent()
    queue.advance()
    await queue.loadCurrent()
    expect(queue.current?.imageId).toBe('b')
    expect(queue.current?.editBuffer).toBe('two')
    queue.advance()
    expect(queue.current).toBeNull()
  })

  it('submitting before a prediction loads is a no-op', async () => {
    const { queue, captured } = makeWorld({ a: 'one' })
    queue.enqueue(['a'])
    await queue.submitCurrent()
    expect(captured).toHaveLength(0)
    expect(queue.current?.status).toBe('idle')
  })
})
