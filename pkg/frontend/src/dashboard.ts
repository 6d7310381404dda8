/**
 * Training dashboard: triggers updates, polls the metrics endpoint, and
 * shapes R matrices for the per-task table. A 409 means another update is
 * running; the trigger button stays disabled until polling sees it finish.
 */

import { ApiError, type FeedbackApi, type UpdateReport } from './api.js'

export interface DashboardState {
  reports: UpdateReport[]
  updating: boolean
  statusMessage: string
}

export function initialDashboard(): DashboardState {
  return { reports: [], updating: false, statusMessage: '' }
}

export async function triggerUpdate(state: DashboardState, api: FeedbackApi): Promise<void> {
  state.updating = true
  state.statusMessage = 'update running'
  try {
    const report = await api.triggerUpdate()
    state.reports.push(report)
    state.statusMessage =
      report.new_batches === 0 ? 'nothing to train on' : `done (${report.checkpoint_hash.slice(0, 12)})`
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      state.statusMessage = 'another update is already running'
      return // keep updating=true; pollUntilIdle clears it
    }
    state.statusMessage = err instanceof Error ? err.message : String(err)
  } finally {
    if (state.statusMessage !== 'another update is already running') {
      state.updating = false
    }
  }
}

/** Poll /metrics until a new report lands or the attempt budget runs out. */
export async function pollUntilIdle(
  state: DashboardState,
  api: FeedbackApi,
  attempts = 30,
  sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
): Promise<boolean> {
  const lastHash = state.reports.at(-1)?.checkpoint_hash
  for (let i = 0; i < attempts; i++) {
    const report = await api.metrics()
    if (report && report.checkpoint_hash !== lastHash) {
      state.reports.push(report)
      state.updating = false
      state.statusMessage = `done (${report.checkpoint_hash.slice(0, 12)})`
      return true
    }
    await sleep(500)
  }
  return false
}

export interface RMatrixCell {
  value: number | null
  label: string
}

/**
 * Shape an R matrix (rows: after task i; columns: tasks 0..T-1 plus union)
 * into labeled cells for the table view. NaN and null render as empty.
 */
export function rMatrixTable(r: (number | null)[][]): RMatrixCell[][] {
  if (r.length === 0) return []
  const cols = r[0].length
  return r.map((row) => {
    if (row.length !== cols) {
      throw new Error('ragged R matrix')
    }
    return row.map((v, j) => {
      const missing = v === null || Number.isNaN(v)
      return {
        value: missing ? null : v,
        label: missing ? '' : (j === cols - 1 ? `union ${v!.toFixed(3)}` : v!.toFixed(3)),
      }
    })
  })
}

/** Peak-minus-final score per task column, skipping missing entries. */
export function forgettingPerTask(r: (number | null)[][]): (number | null)[] {
  const t = r.length
  if (t === 0) return []
  const tasks = r[0].length - 1
  const out: (number | null)[] = []
  for (let j = 0; j < tasks; j++) {
    const final = r[t - 1][j]
    const prior = r
      .slice(0, t - 1)
      .map((row) => row[j])
      .filter((v): v is number => v !== null && !Number.isNaN(v))
    if (final === null || Number.isNaN(final) || prior.length === 0) {
      out.push(null)
    } else {
      out.push(Math.max(...prior) - final)
    }
  }
  return out
}
