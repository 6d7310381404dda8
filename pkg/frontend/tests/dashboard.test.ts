import { describe, expect, it } from 'vitest'

import { FeedbackApi, type UpdateReport } from '../src/api.js'
import {
  forgettingPerTask,
  initialDashboard,
  pollUntilIdle,
  rMatrixTable,
  triggerUpdate,
} from '../src/dashboard.js'

function report(hash: string, overrides: Partial<UpdateReport> = {}): UpdateReport {
  return {
    task_id: 0,
    new_batches: 3,
    replay_batches: 1,
    final_loss: 0.42,
    checkpoint_hash: hash,
    pre_bleu4: 0.1,
    post_bleu4: 0.2,
    ...overrides,
  }
}

function apiFromQueue(responses: Array<{ status: number; body: unknown }>) {
  let call = 0
  const fetchImpl = async () => {
    const { status, body } = responses[Math.min(call++, responses.length - 1)]
    return new Response(JSON.stringify(body), { status })
  }
  return new FeedbackApi('http://svc', fetchImpl)
}

describe('triggerUpdate', () => {
  it('appends the report and reports the checkpoint hash', async () => {
    const state = initialDashboard()
    const api = apiFromQueue([{ status: 200, body: report('abcdef0123456789') }])
    await triggerUpdate(state, api)
    expect(state.reports).toHaveLength(1)
    expect(state.updating).toBe(false)
    expect(state.statusMessage).toBe('done (abcdef012345)')
  })

  it('says so when there was nothing to train on', async () => {
    const state = initialDashboard()
    const api = apiFromQueue([{ status: 200, body: report('aa', { new_batches: 0 }) }])
    await triggerUpdate(state, api)
    expect(state.statusMessage).toBe('nothing to train on')
  })

  it('a 409 keeps the dashboard in the updating state', async () => {
    const state = initialDashboard()
    const api = apiFromQueue([{ status: 409, body: { detail: 'update already in progress' } }])
    await triggerUpdate(state, api)
    expect(state.updating).toBe(true)
    expect(state.statusMessage).toBe('another update is already running')
    expect(state.reports).toHaveLength(0)
  })

  it('other errors surface their message and stop updating', async () => {
    const state = initialDashboard()
    const api = apiFromQueue([{ status: 500, body: { detail: 'checkpoint write failed' } }])
    await triggerUpdate(state, api)
    expect(state.updating).toBe(false)
    expect(state.statusMessage).toMatch(/checkpoint write failed/)
  })
})

describe('pollUntilIdle', () => {
  const instantSleep = async () => {}

  it('resolves once a new checkpoint hash appears', async () => {
    const state = initialDashboard()
    state.reports.push(report('old-hash'))
    state.updating = true
    const api = apiFromQueue([
      { status: 404, body: { detail: 'no report' } },
      { status: 200, body: report('old-hash') },
      { status: 200, body: report('new-hash-0123') },
    ])
    expect(await pollUntilIdle(state, api, 10, instantSleep)).toBe(true)
    expect(state.updating).toBe(false)
    expect(state.reports.at(-1)?.checkpoint_hash).toBe('new-hash-0123')
  })

  it('gives up after the attempt budget', async () => {
    const state = initialDashboard()
    state.reports.push(report('same'))
    const api = apiFromQueue([{ status: 200, body: report('same') }])
    expect(await pollUntilIdle(state, api, 3, instantSleep)).toBe(false)
    expect(state.reports).toHaveLength(1)
  })
})

describe('rMatrixTable', () => {
  it('shapes a 2x3 matrix with a union column', () => {
    const table = rMatrixTable([
      [0.5, NaN, 0.45],
      [0.4, 0.6, 0.55],
    ])
    expect(table[0].map((c) => c.label)).toEqual(['0.500', '', 'union 0.450'])
    expect(table[1].map((c) => c.label)).toEqual(['0.400', '0.600', 'union 0.550'])
    expect(table[0][1].value).toBeNull()
  })

  it('rejects ragged input', () => {
    expect(() => rMatrixTable([[0.1, 0.2], [0.3]])).toThrow(/ragged/)
  })

  it('handles the empty matrix', () => {
    expect(rMatrixTable([])).toEqual([])
  })
})

describe('forgettingPerTask', () => {
  it('is peak minus final per task column', () => {
    // task 0 peaked at 0.5 then dropped to 0.3; task 1 has no prior peak
    const out = forgettingPerTask([
      [0.5, null, 0.5],
      [0.3, 0.6, 0.45],
    ])
    expect(out[0]).toBeCloseTo(0.2, 10)
    expect(out[1]).toBeNull()
  })

  it('ignores NaN rows when finding the peak', () => {
    const out = forgettingPerTask([
      [NaN, null, 0.1],
      [0.4, null, 0.4],
      [0.1, 0.2, 0.15],
    ])
    expect(out[0]).toBeCloseTo(0.3, 10)
  })

  it('handles the empty matrix', () => {
    expect(forgettingPerTask([])).toEqual([])
  })
})
