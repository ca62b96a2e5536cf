import { inflateSync } from 'node:zlib'

import { describe, expect, it } from 'vitest'

import { MaskTool } from '../src/mask_tool'

describe('MaskTool', () => {
    it('starts empty and fills a disc per stamp', () => {
        const tool = new MaskTool(32)
        expect(tool.empty).toBe(true)
        tool.stamp(16, 16, 5)
        expect(tool.empty).toBe(false)
        const count = tool.foregroundCount()
        // Rasterized disc area should be near pi*r^2.
        expect(count).toBeGreaterThan(Math.PI * 25 * 0.7)
        expect(count).toBeLessThan(Math.PI * 25 * 1.3)
    })

    it('stamps clip at the canvas border instead of wrapping', () => {
        const tool = new MaskTool(16)
        tool.stamp(0, 0, 4)
        const mask = tool.rasterize()
        for (let row = 0; row < 16; row++) {
            for (let col = 0; col < 16; col++) {
                if (mask[row * 16 + col]) {
                    expect(Math.hypot(row, col)).toBeLessThanOrEqual(4)
                }
            }
        }
    })

    it('rejects out-of-canvas centers and non-positive radii', () => {
        const tool = new MaskTool(16)
        expect(() => tool.stamp(-1, 3, 2)).toThrow(RangeError)
        expect(() => tool.stamp(3, 16, 2)).toThrow(RangeError)
        expect(() => tool.stamp(3, 3, 0)).toThrow(RangeError)
        expect(() => new MaskTool(4)).toThrow(RangeError)
    })

    it('clear drops every stamp', () => {
        const tool = new MaskTool(16)
        tool.stamp(8, 8, 3)
        tool.clear()
        expect(tool.empty).toBe(true)
        expect(tool.foregroundCount()).toBe(0)
    })

    it('exports a PNG whose decoded pixels equal the rasterized mask', () => {
        const tool = new MaskTool(16)
        tool.stamp(8, 8, 4)
        tool.stamp(3, 12, 2)
        const png = new Uint8Array(Buffer.from(tool.toPngBase64(), 'base64'))
        // Locate the IDAT chunk and inflate it with node's zlib as an oracle.
        const view = new DataView(png.buffer, png.byteOffset, png.byteLength)
        let at = 8
        let rawIdat: Uint8Array | null = null
        while (at < png.length) {
            const length = view.getUint32(at)
            const type = new TextDecoder().decode(png.subarray(at + 4, at + 8))
            if (type === 'IDAT') rawIdat = png.subarray(at + 8, at + 8 + length)
            at += 12 + length
        }
        const scanlines = inflateSync(rawIdat!)
        const mask = tool.rasterize()
        for (let row = 0; row < 16; row++) {
            expect(scanlines[row * 17]).toBe(0)
            for (let col = 0; col < 16; col++) {
                const want = mask[row * 16 + col] ? 255 : 0
                expect(scanlines[row * 17 + 1 + col]).toBe(want)
            }
        }
    })
})
