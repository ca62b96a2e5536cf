/**
 * Histogram drafts: 100 editable bar heights that normalize into the
 * ApiHistogram the service accepts (non-negative, sum 1).  The guard is
 * here, not in the UI: a zero-total draft cannot be normalized, and
 * negative or out-of-range edits throw before they reach the draft.
 */

export const N_BINS = 100

export type Draft = readonly number[]

export function newDraft(): Draft {
    return new Array(N_BINS).fill(0)
}

export function setBar(draft: Draft, index: number, height: number): Draft {
    if (!Number.isInteger(index) || index < 0 || index >= N_BINS) {
        throw new RangeError(`bin index ${index} outside [0, ${N_BINS - 1}]`)
    }
    if (!Number.isFinite(height) || height < 0) {
        throw new RangeError(`bar height must be a finite number >= 0, got ${height}`)
    }
    const next = draft.slice()
    next[index] = height
    return next
}

export function totalMass(draft: Draft): number {
    let sum = 0
    for (const v of draft) sum += v
    return sum
}

/** A draft is sendable once it carries any mass at all. */
export function canSubmit(draft: Draft): boolean {
    return draft.length === N_BINS && draft.every(v => Number.isFinite(v) && v >= 0) && totalMass(draft) > 0
}

/** Normalized ApiHistogram (sum 1); throws on unsendable drafts. */
export function normalize(draft: Draft): number[] {
    if (!canSubmit(draft)) {
        throw new Error('draft has no mass to normalize')
    }
    const sum = totalMass(draft)
    return draft.map(v => v / sum)
}

// Presets mirror the server's discretized-Gaussian-mixture math so the
// buttons and POST /presets agree bin for bin.

function roundHalfEven(x: number): number {
    const floor = Math.floor(x)
    const diff = x - floor
    if (diff < 0.5) return floor
    if (diff > 0.5) return floor + 1
    return floor % 2 === 0 ? floor : floor + 1
}

function mixture(means: number[], widths: number[], weights: number[]): number[] {
    const hist = new Array(N_BINS).fill(0)
    for (let k = 0; k < means.length; k++) {
        const mean = means[k]!
        const width = widths[k]!
        const weight = weights[k]!
        if (mean < 0 || mean > N_BINS - 1) throw new RangeError(`mean bin ${mean} outside [0, ${N_BINS - 1}]`)
        if (width < 0) throw new RangeError('widths must be >= 0')
        if (weight <= 0) throw new RangeError('weights must be positive')
        if (width === 0) {
            hist[roundHalfEven(mean)] += weight
            continue
        }
        const mode = new Array(N_BINS)
        let sum = 0
        for (let b = 0; b < N_BINS; b++) {
            const z = (b - mean) / width
            mode[b] = Math.exp(-0.5 * z * z)
            sum += mode[b]
        }
        for (let b = 0; b < N_BINS; b++) hist[b] += (weight * mode[b]) / sum
    }
    const total = hist.reduce((a: number, b: number) => a + b, 0)
    return hist.map((v: number) => v / total)
}

export function uniformPreset(): number[] {
    return new Array(N_BINS).fill(1 / N_BINS)
}

export function deltaPreset(bin: number): number[] {
    return mixture([bin], [0], [1])
}

export function unimodalPreset(mean: number, width: number): number[] {
    return mixture([mean], [width], [1])
}

export function bimodalPreset(
    m1: number,
    m2: number,
    w1: number,
    w2: number,
    a1 = 1,
    a2 = 1,
): number[] {
    return mixture([m1, m2], [w1, w2], [a1, a2])
}
