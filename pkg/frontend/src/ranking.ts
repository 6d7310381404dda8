/**
 * Augmentation ranking panel. A set is reviewed in exactly one of two modes:
 * drag-to-reorder (producing a rank permutation) or good/bad toggles. Submit
 * stays disabled until the user has actually interacted.
 */

import type { AugmentationSet, FeedbackApi } from './api.js'

export type PanelMode = 'rank' | 'flag'

export interface PanelState {
  set: AugmentationSet
  mode: PanelMode
  order: string[]                          // augmentation ids, best first
  flags: Record<string, 'good' | 'bad'>
  touched: boolean
  error: string | null
}

export function openPanel(set: AugmentationSet, mode: PanelMode = 'rank'): PanelState {
  return {
    set,
    mode,
    order: set.variants.map((v) => v.augmentation_id),
    flags: {},
    touched: false,
    error: null,
  }
}

/** Move the item at `from` to position `to`, as drag-and-drop does. */
export function reorder(state: PanelState, from: number, to: number): void {
  if (from < 0 || from >= state.order.length || to < 0 || to >= state.order.length) {
    throw new Error(`reorder out of range: ${from} -> ${to} of ${state.order.length}`)
  }
  if (from === to) return
  const [moved] = state.order.splice(from, 1)
  state.order.splice(to, 0, moved)
  state.touched = true
}

export function toggleFlag(state: PanelState, augmentationId: string, value: 'good' | 'bad'): void {
  if (!state.order.includes(augmentationId)) {
    throw new Error(`unknown augmentation ${augmentationId}`)
  }
  state.flags[augmentationId] = value
  state.touched = true
}

export function canSubmit(state: PanelState): boolean {
  if (!state.touched) return false
  if (state.mode === 'flag') return Object.keys(state.flags).length > 0
  return state.order.length > 0
}

/** Ranks from the current order: best = 1, always a permutation of 1..m. */
export function ranksFromOrder(order: string[]): Record<string, number> {
  const ranks: Record<string, number> = {}
  order.forEach((id, i) => {
    ranks[id] = i + 1
  })
  return ranks
}

export async function submitPanel(state: PanelState, api: FeedbackApi): Promise<boolean> {
  if (!canSubmit(state)) return false
  try {
    if (state.mode === 'rank') {
      await api.submitRanks(state.set.set_id, ranksFromOrder(state.order))
    } else {
      await api.submitRatings(state.set.set_id, state.flags)
    }
    state.error = null
    return true
  } catch (err) {
    // a 422 (or any failure) keeps the panel state so the user can fix it
    state.error = err instanceof Error ? err.message : String(err)
    return false
  }
}
