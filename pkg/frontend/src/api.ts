/**
 * Typed client for the lesionforge HTTP service.  Every non-2xx response
 * carries {code, message}; that code is surfaced verbatim as ApiError.code
 * so the UI can show exactly what the server said.
 */

import { parseLsf, type LsfTensor } from './lsf'

export class ApiError extends Error {
    constructor(
        public readonly status: number,
        public readonly code: string,
        message: string,
    ) {
        super(message)
        this.name = 'ApiError'
    }
}

export interface CheckpointInfo {
    id: string
    step: number
    digest: string
    config: { patch_size: number; hist_bins: number; bridge_mode: string; mode: string }
}

export interface MaskInfo {
    id: string
    height: number
    width: number
    thumbnail: string
}

export interface SynthesisBody {
    checkpoint_id: string
    histogram: number[]
    mask_id?: string
    mask_png?: string
}

export interface ImplantBody extends SynthesisBody {
    slice_id: string
    spec?: { rotation?: number; scale?: number; seed?: number; feather_sigma?: number }
}

export interface PresetSpec {
    kind: 'uniform' | 'delta' | 'unimodal' | 'bimodal'
    means?: number[]
    widths?: number[]
    weights?: number[]
}

export interface SynthesizedImage {
    png: Uint8Array
    histogramL1: number
}

export interface ImplantPreview {
    slicePng: string
    maskPng: string
    position: [number, number]
    histogramL1: number | null
}

export const LSF_MEDIA_TYPE = 'application/x-lsf1'
export const HISTOGRAM_L1_HEADER = 'X-Histogram-L1'

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class ApiClient {
    constructor(
        private readonly base: string,
        private readonly fetchFn: FetchLike = (...args) => fetch(...args),
    ) {}

    private async request(path: string, init?: RequestInit): Promise<Response> {
        const response = await this.fetchFn(this.base + path, init)
        if (!response.ok) {
            let code = 'bad_response'
            let message = `${response.status} from ${path}`
            try {
                const body = await response.json()
                if (body && typeof body.code === 'string') {
                    code = body.code
                    message = String(body.message ?? message)
                }
            } catch {
                // non-JSON error body; keep the fallback code
            }
            throw new ApiError(response.status, code, message)
        }
        return response
    }

    private post(path: string, body: unknown, accept?: string): Promise<Response> {
        const headers: Record<string, string> = { 'Content-Type': 'application/json' }
        if (accept) headers['Accept'] = accept
        return this.request(path, { method: 'POST', headers, body: JSON.stringify(body) })
    }

    async health(): Promise<boolean> {
        const r = await this.request('/health')
        return (await r.json()).status === 'ok'
    }

    async checkpoints(): Promise<CheckpointInfo[]> {
        return (await this.request('/checkpoints')).json()
    }

    async masks(): Promise<MaskInfo[]> {
        return (await this.request('/masks')).json()
    }

    async slices(): Promise<{ id: string }[]> {
        return (await this.request('/slices')).json()
    }

    async preset(spec: PresetSpec): Promise<number[]> {
        const body = await (await this.post('/presets', spec)).json()
        return body.bins
    }

    async synthesizePng(body: SynthesisBody): Promise<SynthesizedImage> {
        const response = await this.post('/synthesize', body)
        return {
            png: new Uint8Array(await response.arrayBuffer()),
            histogramL1: Number(response.headers.get(HISTOGRAM_L1_HEADER) ?? NaN),
        }
    }

    async synthesizeLsf(body: SynthesisBody): Promise<{ tensor: LsfTensor; histogramL1: number }> {
        const response = await this.post('/synthesize', body, LSF_MEDIA_TYPE)
        return {
            tensor: parseLsf(await response.arrayBuffer()),
            histogramL1: Number(response.headers.get(HISTOGRAM_L1_HEADER) ?? NaN),
        }
    }

    async implantPreview(body: ImplantBody): Promise<ImplantPreview> {
        const raw = await (await this.post('/implant/preview', body)).json()
        return {
            slicePng: raw.slice_png,
            maskPng: raw.mask_png,
            position: raw.position,
            histogramL1: raw.histogram_l1,
        }
    }
}
