/**
 * DOM glue for the studio.  All decisions live in the pure modules
 * (histogram, session, api); this file only moves values between them
 * and the page.  At most one synthesis request is in flight — edits made
 * while waiting queue exactly one refresh.
 */

import { ApiClient, ApiError, type CheckpointInfo, type MaskInfo } from './api'
import {
    canSubmit,
    deltaPreset,
    newDraft,
    normalize,
    setBar,
    totalMass,
    unimodalPreset,
    uniformPreset,
    bimodalPreset,
    N_BINS,
    type Draft,
} from './histogram'
import { MaskTool } from './mask_tool'
import { gridLayout, StudioSession } from './session'

const BAR_WIDTH = 7
const EDITOR_HEIGHT = 160

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    cls?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag)
    if (cls) node.className = cls
    if (text) node.textContent = text
    return node
}

export class Studio {
    private readonly session = new StudioSession()
    private readonly maskTool = new MaskTool(64)
    private inFlight = false
    private refreshQueued = false

    private readonly editor = el('canvas', 'editor')
    private readonly preview = el('img', 'preview')
    private readonly badge = el('span', 'badge', '—')
    private readonly status = el('span', 'status', 'ready')
    private readonly checkpointSelect = el('select')
    private readonly maskSelect = el('select')
    private readonly historyStrip = el('div', 'history')
    private readonly compareView = el('div', 'compare')
    private readonly synthesizeButton = el('button', 'primary', 'synthesize')

    constructor(
        private readonly api: ApiClient,
        private readonly root: HTMLElement,
    ) {}

    async start(): Promise<void> {
        this.layout()
        this.editor.width = N_BINS * BAR_WIDTH
        this.editor.height = EDITOR_HEIGHT
        this.editor.addEventListener('pointerdown', e => this.paintBar(e))
        this.editor.addEventListener('pointermove', e => {
            if (e.buttons & 1) this.paintBar(e)
        })
        this.synthesizeButton.addEventListener('click', () => void this.synthesize())

        try {
            const [checkpoints, masks] = await Promise.all([this.api.checkpoints(), this.api.masks()])
            this.fillCheckpoints(checkpoints)
            this.fillMasks(masks)
        } catch (err) {
            this.showError(err)
        }
        this.setDraft(unimodalPreset(30, 4))
    }

    private layout(): void {
        const controls = el('div', 'controls')
        controls.append('checkpoint ', this.checkpointSelect, ' mask ', this.maskSelect)

        const presets = el('div', 'presets')
        const buttons: Array<[string, () => Draft | number[]]> = [
            ['uniform', uniformPreset],
            ['dark delta', () => deltaPreset(20)],
            ['bright delta', () => deltaPreset(80)],
            ['unimodal 30', () => unimodalPreset(30, 4)],
            ['bimodal 20/70', () => bimodalPreset(20, 70, 3, 3)],
            ['clear', newDraft],
        ]
        for (const [label, make] of buttons) {
            const b = el('button', undefined, label)
            b.addEventListener('click', () => this.setDraft(make()))
            presets.append(b)
        }

        const actions = el('div', 'actions')
        actions.append(this.synthesizeButton, ' round-trip L1 ', this.badge, ' ', this.status)

        this.root.append(
            controls,
            el('h2', undefined, 'density draft'),
            this.editor,
            presets,
            actions,
            this.preview,
            el('h2', undefined, 'history'),
            this.historyStrip,
            el('h2', undefined, 'compare'),
            this.compareView,
        )
    }

    private fillCheckpoints(checkpoints: CheckpointInfo[]): void {
        for (const ck of checkpoints) {
            const option = el('option', undefined, `${ck.id} (step ${ck.step})`)
            option.value = ck.id
            this.checkpointSelect.append(option)
        }
        const apply = () => {
            this.session.checkpointId = this.checkpointSelect.value || null
        }
        this.checkpointSelect.addEventListener('change', apply)
        apply()
    }

    private fillMasks(masks: MaskInfo[]): void {
        for (const m of masks) {
            const option = el('option', undefined, m.id)
            option.value = m.id
            this.maskSelect.append(option)
        }
        const apply = () => {
            this.session.mask = this.maskSelect.value
                ? { kind: 'pool', id: this.maskSelect.value }
                : null
        }
        this.maskSelect.addEventListener('change', apply)
        apply()
    }

    private setDraft(draft: Draft | number[]): void {
        this.session.draft = draft.slice()
        this.drawEditor()
    }

    private paintBar(e: PointerEvent): void {
        const rect = this.editor.getBoundingClientRect()
        const bin = Math.floor((e.clientX - rect.left) / BAR_WIDTH)
        const height = Math.max(0, 1 - (e.clientY - rect.top) / EDITOR_HEIGHT)
        try {
            this.session.draft = setBar(this.session.draft, bin, height)
        } catch {
            return // off-canvas drags land here; nothing to update
        }
        this.drawEditor()
    }

    private drawEditor(): void {
        const ctx = this.editor.getContext('2d')
        if (!ctx) return
        const draft = this.session.draft
        ctx.clearRect(0, 0, this.editor.width, this.editor.height)
        const peak = Math.max(totalMass(draft) > 0 ? Math.max(...draft) : 0, 1e-9)
        const preview = canSubmit(draft) ? normalize(draft) : null
        for (let b = 0; b < N_BINS; b++) {
            const h = (draft[b]! / peak) * (EDITOR_HEIGHT - 8)
            ctx.fillStyle = '#356fa0'
            ctx.fillRect(b * BAR_WIDTH, EDITOR_HEIGHT - h, BAR_WIDTH - 1, h)
            if (preview) {
                const hp = preview[b]! * (EDITOR_HEIGHT - 8) * 10
                ctx.fillStyle = 'rgba(220, 160, 40, 0.6)'
                ctx.fillRect(b * BAR_WIDTH, EDITOR_HEIGHT - hp, BAR_WIDTH - 1, 2)
            }
        }
        this.synthesizeButton.disabled = !this.session.canSynthesize()
        this.status.textContent = canSubmit(draft) ? 'ready' : 'draft has no mass — unsendable'
    }

    private async synthesize(): Promise<void> {
        if (!this.session.canSynthesize()) return
        if (this.inFlight) {
            this.refreshQueued = true
            return
        }
        this.inFlight = true
        this.status.textContent = 'rendering…'
        try {
            const request = this.session.buildRequest()
            const { png, histogramL1 } = await this.api.synthesizePng(request)
            const url = URL.createObjectURL(new Blob([png.slice()], { type: 'image/png' }))
            this.preview.src = url
            this.badge.textContent = histogramL1.toFixed(3)
            this.session.append({
                request,
                thumbnailUrl: url,
                histogramL1,
                histogram: request.histogram,
            })
            this.renderHistory()
            this.status.textContent = 'ready'
        } catch (err) {
            this.showError(err)
        } finally {
            this.inFlight = false
            if (this.refreshQueued) {
                this.refreshQueued = false
                void this.synthesize()
            }
        }
    }

    private renderHistory(): void {
        this.historyStrip.replaceChildren()
        this.session.history.forEach((entry, i) => {
            const img = el('img', 'thumb') as HTMLImageElement
            img.src = entry.thumbnailUrl
            img.title = `#${i} L1 ${entry.histogramL1.toFixed(3)}`
            img.addEventListener('click', () => this.renderCompare())
            this.historyStrip.append(img)
        })
    }

    private renderCompare(): void {
        const n = this.session.history.length
        if (n === 0) return
        const { columns } = gridLayout(n)
        this.compareView.style.gridTemplateColumns = `repeat(${columns}, auto)`
        this.compareView.replaceChildren(
            ...this.session.history.map(entry => {
                const cell = el('div', 'cell')
                const img = el('img', 'thumb') as HTMLImageElement
                img.src = entry.thumbnailUrl
                cell.append(img, sparkline(entry.histogram))
                return cell
            }),
        )
    }

    private showError(err: unknown): void {
        if (err instanceof ApiError) {
            this.status.textContent = `${err.code}: ${err.message}`
        } else {
            this.status.textContent = String(err)
        }
    }
}

function sparkline(histogram: readonly number[]): HTMLCanvasElement {
    const canvas = document.createElement('canvas')
    canvas.width = N_BINS
    canvas.height = 24
    const ctx = canvas.getContext('2d')
    if (ctx) {
        const peak = Math.max(...histogram, 1e-9)
        ctx.fillStyle = '#888'
        histogram.forEach((v, b) => {
            const h = (v / peak) * 22
            ctx.fillRect(b, 24 - h, 1, h)
        })
    }
    return canvas
}
