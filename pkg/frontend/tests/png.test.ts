import { inflateSync, crc32 as zlibCrc32 } from 'node:zlib'

import { describe, expect, it } from 'vitest'

import { encodeGrayPng, toBase64 } from '../src/png'

interface Chunk {
    type: string
    data: Uint8Array
    crc: number
}

/** Minimal chunk walker; deliberately independent of the encoder internals. */
function readChunks(png: Uint8Array): Chunk[] {
    const signature = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]
    expect(Array.from(png.subarray(0, 8))).toEqual(signature)
    const view = new DataView(png.buffer, png.byteOffset, png.byteLength)
    const chunks: Chunk[] = []
    let at = 8
    while (at < png.length) {
        const length = view.getUint32(at)
        const type = new TextDecoder().decode(png.subarray(at + 4, at + 8))
        const data = png.subarray(at + 8, at + 8 + length)
        const crc = view.getUint32(at + 8 + length)
        chunks.push({ type, data, crc })
        at += 12 + length
    }
    return chunks
}

function grad(width: number, height: number): Float32Array {
    const px = new Float32Array(width * height)
    for (let i = 0; i < px.length; i++) px[i] = i / (px.length - 1)
    return px
}

describe('encodeGrayPng', () => {
    it('emits a well-formed 8-bit grayscale IHDR and trailing IEND', () => {
        const png = encodeGrayPng(grad(5, 3), 5, 3)
        const chunks = readChunks(png)
        expect(chunks.map(c => c.type)).toEqual(['IHDR', 'IDAT', 'IEND'])
        const ihdr = new DataView(chunks[0]!.data.buffer, chunks[0]!.data.byteOffset)
        expect(ihdr.getUint32(0)).toBe(5) // width
        expect(ihdr.getUint32(4)).toBe(3) // height
        expect(chunks[0]!.data[8]).toBe(8) // bit depth
        expect(chunks[0]!.data[9]).toBe(0) // grayscale
        expect(chunks[2]!.data).toHaveLength(0)
    })

    it('chunk CRCs match an independent crc32', () => {
        const png = encodeGrayPng(grad(4, 4), 4, 4)
        for (const chunk of readChunks(png)) {
            const typed = new Uint8Array(4 + chunk.data.length)
            typed.set(new TextEncoder().encode(chunk.type), 0)
            typed.set(chunk.data, 4)
            expect(chunk.crc >>> 0).toBe(zlibCrc32(typed) >>> 0)
        }
    })

    it('zlib can inflate the IDAT stream back to the filtered scanlines', () => {
        const width = 7
        const height = 5
        const pixels = grad(width, height)
        const png = encodeGrayPng(pixels, width, height)
        const idat = readChunks(png).find(c => c.type === 'IDAT')!
        const raw = inflateSync(idat.data) // also validates the adler32 trailer
        expect(raw.length).toBe(height * (width + 1))
        for (let row = 0; row < height; row++) {
            expect(raw[row * (width + 1)]).toBe(0) // filter byte: none
            for (let col = 0; col < width; col++) {
                const want = Math.floor(pixels[row * width + col]! * 255 + 0.5)
                expect(raw[row * (width + 1) + 1 + col]).toBe(want)
            }
        }
    })

    it('clamps out-of-range samples instead of wrapping', () => {
        const png = encodeGrayPng(new Float32Array([-0.5, 2.0]), 2, 1)
        const idat = readChunks(png).find(c => c.type === 'IDAT')!
        const raw = inflateSync(idat.data)
        expect(raw[1]).toBe(0)
        expect(raw[2]).toBe(255)
    })

    it('survives payloads larger than one stored deflate block', () => {
        const width = 300
        const height = 240 // filtered size 72k > 65535 forces a block split
        const pixels = new Float32Array(width * height).fill(0.5)
        const png = encodeGrayPng(pixels, width, height)
        const idat = readChunks(png).find(c => c.type === 'IDAT')!
        const raw = inflateSync(idat.data)
        expect(raw.length).toBe(height * (width + 1))
        expect(raw[1]).toBe(Math.floor(0.5 * 255 + 0.5))
    })

    it('rejects mismatched buffer sizes', () => {
        expect(() => encodeGrayPng(new Float32Array(3), 2, 2)).toThrow(RangeError)
    })

    it('base64 helper round-trips through Buffer', () => {
        const png = encodeGrayPng(grad(2, 2), 2, 2)
        const b64 = toBase64(png)
        expect(new Uint8Array(Buffer.from(b64, 'base64'))).toEqual(png)
    })
})
