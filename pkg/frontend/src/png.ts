/**
 * Minimal 8-bit grayscale PNG writer (stored-deflate blocks, no external
 * deps) — enough to ship drawn masks to the service as inline mask_png.
 */

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]

const CRC_TABLE = (() => {
    const table = new Uint32Array(256)
    for (let n = 0; n < 256; n++) {
        let c = n
        for (let k = 0; k < 8; k++) {
            c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1
        }
        table[n] = c >>> 0
    }
    return table
})()

function crc32(bytes: Uint8Array): number {
    let c = 0xffffffff
    for (const b of bytes) c = CRC_TABLE[(c ^ b) & 0xff]! ^ (c >>> 8)
    return (c ^ 0xffffffff) >>> 0
}

function adler32(bytes: Uint8Array): number {
    let a = 1
    let b = 0
    for (const v of bytes) {
        a = (a + v) % 65521
        b = (b + a) % 65521
    }
    return ((b << 16) | a) >>> 0
}

function u32be(value: number): number[] {
    return [(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]
}

function chunk(type: string, data: Uint8Array): number[] {
    const typed = new Uint8Array(4 + data.length)
    for (let i = 0; i < 4; i++) typed[i] = type.charCodeAt(i)
    typed.set(data, 4)
    return [...u32be(data.length), ...typed, ...u32be(crc32(typed))]
}

/** Zlib stream with stored (uncompressed) deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
    const blocks: number[] = [0x78, 0x01]
    const MAX = 65535
    for (let off = 0; off < raw.length; off += MAX) {
        const len = Math.min(MAX, raw.length - off)
        const final = off + len >= raw.length ? 1 : 0
        blocks.push(final, len & 0xff, len >>> 8, ~len & 0xff, (~len >>> 8) & 0xff)
        for (let i = 0; i < len; i++) blocks.push(raw[off + i]!)
    }
    blocks.push(...u32be(adler32(raw)))
    return new Uint8Array(blocks)
}

/** pixels: row-major values in [0,1], length width*height. */
export function encodeGrayPng(pixels: ArrayLike<number>, width: number, height: number): Uint8Array {
    if (width <= 0 || height <= 0 || pixels.length !== width * height) {
        throw new RangeError(`pixel count ${pixels.length} does not match ${width}x${height}`)
    }
    const raw = new Uint8Array(height * (width + 1))
    for (let r = 0; r < height; r++) {
        raw[r * (width + 1)] = 0 // filter: none
        for (let c = 0; c < width; c++) {
            const v = Math.min(1, Math.max(0, Number(pixels[r * width + c])))
            raw[r * (width + 1) + 1 + c] = Math.floor(v * 255 + 0.5)
        }
    }
    const ihdr = new Uint8Array([...u32be(width), ...u32be(height), 8, 0, 0, 0, 0])
    const out = [
        ...SIGNATURE,
        ...chunk('IHDR', ihdr),
        ...chunk('IDAT', zlibStored(raw)),
        ...chunk('IEND', new Uint8Array(0)),
    ]
    return new Uint8Array(out)
}

export function toBase64(bytes: Uint8Array): string {
    let bin = ''
    for (const b of bytes) bin += String.fromCharCode(b)
    // btoa in the browser, Buffer under node — both produce the same text.
    if (typeof btoa === 'function') return btoa(bin)
    const nodeBuffer = (globalThis as Record<string, unknown>)['Buffer'] as
        | { from(data: Uint8Array): { toString(encoding: string): string } }
        | undefined
    if (!nodeBuffer) throw new Error('no base64 encoder available')
    return nodeBuffer.from(bytes).toString('base64')
}
