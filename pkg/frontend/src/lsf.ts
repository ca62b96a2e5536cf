/**
 * LSF1 parsing: 4 magic bytes "LSF1", u32-LE header length, UTF-8 JSON
 * header {"dtype":"f32","shape":[...]}, then row-major little-endian
 * float32 payload.  The lossless alternative to PNG responses.
 */

export interface LsfTensor {
    shape: number[]
    data: Float32Array
}

const MAGIC = 'LSF1'

export function parseLsf(buf: ArrayBuffer): LsfTensor {
    const bytes = new Uint8Array(buf)
    if (bytes.length < 8 || new TextDecoder().decode(bytes.slice(0, 4)) !== MAGIC) {
        throw new Error('not an LSF1 payload (bad magic)')
    }
    const view = new DataView(buf)
    const headerLen = view.getUint32(4, true)
    if (8 + headerLen > bytes.length) {
        throw new Error('LSF1 header runs past the payload')
    }
    let header: { dtype?: string; shape?: unknown }
    try {
        header = JSON.parse(new TextDecoder().decode(bytes.slice(8, 8 + headerLen)))
    } catch {
        throw new Error('LSF1 header is not valid JSON')
    }
    if (header.dtype !== 'f32') {
        throw new Error(`unsupported LSF1 dtype ${String(header.dtype)}`)
    }
    if (!Array.isArray(header.shape) || !header.shape.every(s => Number.isInteger(s) && s >= 0)) {
        throw new Error('LSF1 header has no valid shape')
    }
    const shape = header.shape as number[]
    const count = shape.reduce((a, b) => a * b, 1)
    const start = 8 + headerLen
    if (start + count * 4 > bytes.length) {
        throw new Error('LSF1 payload truncated')
    }
    const data = new Float32Array(count)
    for (let i = 0; i < count; i++) {
        data[i] = view.getFloat32(start + i * 4, true)
    }
    return { shape, data }
}

export function meanOf(tensor: LsfTensor): number {
    let sum = 0
    for (const v of tensor.data) sum += v
    return tensor.data.length ? sum / tensor.data.length : 0
}
