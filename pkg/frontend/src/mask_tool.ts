/**
 * Blob drawing without a canvas dependency: the tool records stamped
 * circles on a patch-resolution grid and rasterizes them to a binary
 * mask.  (Picking from the server pool is the primary path; drawing is
 * an ergonomic extra.)
 */

import { encodeGrayPng, toBase64 } from './png'

export interface Stamp {
    row: number
    col: number
    radius: number
}

export class MaskTool {
    private stamps: Stamp[] = []

    constructor(readonly size: number) {
        if (!Number.isInteger(size) || size < 8) {
            throw new RangeError(`mask size must be an integer >= 8, got ${size}`)
        }
    }

    stamp(row: number, col: number, radius: number): void {
        if (radius <= 0) throw new RangeError('stamp radius must be positive')
        if (row < 0 || row >= this.size || col < 0 || col >= this.size) {
            throw new RangeError(`stamp center (${row}, ${col}) outside the ${this.size} canvas`)
        }
        this.stamps.push({ row, col, radius })
    }

    clear(): void {
        this.stamps = []
    }

    get empty(): boolean {
        return this.stamps.length === 0
    }

    /** 0/1 raster, row-major. */
    rasterize(): Uint8Array {
        const mask = new Uint8Array(this.size * this.size)
        for (const { row, col, radius } of this.stamps) {
            const r2 = radius * radius
            const rmin = Math.max(0, Math.floor(row - radius))
            const rmax = Math.min(this.size - 1, Math.ceil(row + radius))
            const cmin = Math.max(0, Math.floor(col - radius))
            const cmax = Math.min(this.size - 1, Math.ceil(col + radius))
            for (let r = rmin; r <= rmax; r++) {
                for (let c = cmin; c <= cmax; c++) {
                    const dr = r - row
                    const dc = c - col
                    if (dr * dr + dc * dc <= r2) mask[r * this.size + c] = 1
                }
            }
        }
        return mask
    }

    foregroundCount(): number {
        let n = 0
        for (const v of this.rasterize()) n += v
        return n
    }

    /** Base64 PNG ready for the synthesize body's mask_png field. */
    toPngBase64(): string {
        return toBase64(encodeGrayPng(this.rasterize(), this.size, this.size))
    }
}
