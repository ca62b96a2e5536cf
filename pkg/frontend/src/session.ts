/**
 * Studio session state: current selections, the working draft, and an
 * append-only history of (request, thumbnail) pairs.  Everything the view
 * needs derives from this state through pure functions, so identical
 * sessions always render identical image sources.
 */

import { canSubmit, newDraft, normalize, type Draft } from './histogram'
import type { SynthesisBody } from './api'

export interface HistoryEntry {
    readonly request: SynthesisBody
    readonly thumbnailUrl: string
    readonly histogramL1: number
    readonly histogram: readonly number[]
}

export type MaskChoice =
    | { kind: 'pool'; id: string }
    | { kind: 'drawn'; png: string }

export class StudioSession {
    checkpointId: string | null = null
    mask: MaskChoice | null = null
    draft: Draft = newDraft()
    private readonly entries: HistoryEntry[] = []

    get history(): readonly HistoryEntry[] {
        return Object.freeze([...this.entries])
    }

    /** True once a request can actually be built from the current state. */
    canSynthesize(): boolean {
        return this.checkpointId !== null && this.mask !== null && canSubmit(this.draft)
    }

    /** The exact body POST /synthesize will receive; throws when unsendable. */
    buildRequest(): SynthesisBody {
        if (this.checkpointId === null || this.mask === null) {
            throw new Error('select a checkpoint and a mask first')
        }
        const body: SynthesisBody = {
            checkpoint_id: this.checkpointId,
            histogram: normalize(this.draft),
        }
        if (this.mask.kind === 'pool') body.mask_id = this.mask.id
        else body.mask_png = this.mask.png
        return body
    }

    append(entry: HistoryEntry): void {
        this.entries.push(Object.freeze({ ...entry }))
    }
}

/** Compare-grid shape: squarish, wide rather than tall (12 -> 4 x 3). */
export function gridLayout(count: number): { columns: number; rows: number } {
    if (count < 1) throw new RangeError('grid needs at least one entry')
    const columns = Math.ceil(Math.sqrt(count))
    return { columns, rows: Math.ceil(count / columns) }
}

/** Pure view projection: one image source per selected history entry. */
export function compareSources(session: StudioSession, indices: readonly number[]): string[] {
    return indices.map(i => {
        const entry = session.history[i]
        if (!entry) throw new RangeError(`no history entry ${i}`)
        return entry.thumbnailUrl
    })
}
