// DOM wiring for the repaint/layout studio.

import { ApiError, NoiseloomClient } from './api.js'
import {
  displayRectToRegion,
  regionToDisplayRect,
  snapDisplayRect,
  type GridView,
} from './geometry.js'
import { SessionState, describeEvent } from './state.js'
import { drawAttentionHeat, drawGrid, drawLabelMap, drawSelection, drawSwapArrows } from './render.js'
import type { AttentionPayload, DisplayRect, EditMode, SwapListPayload } from './types.js'

const CELL_PX = 32

interface PendingRect {
  rect: DisplayRect
  category?: string
}

export class StudioApp {
  private client: NoiseloomClient
  private state: SessionState
  private view: GridView = { blockRows: 16, blockCols: 16, cellPx: CELL_PX }
  private mode: EditMode = 'repaint'
  private pending: PendingRect[] = []
  private dragStart: { x: number; y: number } | null = null
  private dragRect: DisplayRect | null = null
  private attentionOverlay: AttentionPayload | null = null
  private lastSwaps: SwapListPayload[] = []

  constructor(
    private root: Document,
    baseUrl: string,
  ) {
    this.client = new NoiseloomClient(baseUrl)
    this.state = new SessionState(this.client)
  }

  private el<T extends HTMLElement>(id: string): T {
    const node = this.root.getElementById(id)
    if (!node) throw new Error(`missing element #${id}`)
    return node as T
  }

  init(): void {
    const canvas = this.el<HTMLCanvasElement>('board')
    canvas.width = this.view.blockCols * CELL_PX
    canvas.height = this.view.blockRows * CELL_PX
    canvas.addEventListener('mousedown', (e) => this.onDown(e))
    canvas.addEventListener('mousemove', (e) => this.onMove(e))
    canvas.addEventListener('mouseup', (e) => this.onUp(e))
    this.el<HTMLButtonElement>('new-session').addEventListener('click', () => {
      void this.newSession()
    })
    this.el<HTMLButtonElement>('submit').addEventListener('click', () => {
      void this.submit()
    })
    this.el<HTMLButtonElement>('clear').addEventListener('click', () => {
      this.pending = []
      this.redraw()
    })
    this.el<HTMLSelectElement>('mode').addEventListener('change', (e) => {
      this.mode = (e.target as HTMLSelectElement).value as EditMode
      this.pending = []
      this.redraw()
    })
    this.el<HTMLSelectElement>('attention-token').addEventListener('change', () => {
      void this.refreshAttention()
    })
    this.updateControls()
  }

  private status(text: string, isError = false): void {
    const node = this.el<HTMLSpanElement>('status')
    node.textContent = text
    node.className = isError ? 'status error' : 'status'
  }

  private promptCategories(): string[] {
    return this.el<HTMLInputElement>('prompt')
      .value.split(',')
      .map((s) => s.trim())
      .filter((s) => s.length > 0)
  }

  async newSession(): Promise<void> {
    const seed = Number(this.el<HTMLInputElement>('seed').value) || 0
    const prompt = this.promptCategories()
    this.status('generating...')
    try {
      const result = await this.state.start({ seed, prompt })
      this.pending = []
      this.lastSwaps = []
      this.populateSelectors(prompt, result.step0_attention.tokens)
      this.attentionOverlay = null
      await this.refreshAttention()
      this.renderHistory()
      this.redraw()
      this.status(`session ${this.state.sessionId}`)
    } catch (err) {
      this.status(this.describeError(err), true)
    } finally {
      this.updateControls()
    }
  }

  private populateSelectors(prompt: string[], tokens: string[]): void {
    const category = this.el<HTMLSelectElement>('category')
    category.innerHTML = ''
    for (const name of prompt) {
      const option = this.root.createElement('option')
      option.value = name
      option.textContent = name
      category.appendChild(option)
    }
    const attn = this.el<HTMLSelectElement>('attention-token')
    attn.innerHTML = ''
    const off = this.root.createElement('option')
    off.value = ''
    off.textContent = '(no overlay)'
    attn.appendChild(off)
    for (const name of tokens) {
      const option = this.root.createElement('option')
      option.value = name
      option.textContent = name
      attn.appendChild(option)
    }
  }

  private async refreshAttention(): Promise<void> {
    const token = this.el<HTMLSelectElement>('attention-token').value
    if (!token || !this.state.sessionId) {
      this.attentionOverlay = null
      this.redraw()
      return
    }
    try {
      this.attentionOverlay = await this.client.attention(this.state.sessionId, token)
    } catch (err) {
      this.status(this.describeError(err), true)
      this.attentionOverlay = null
    }
    this.redraw()
  }

  private canvasPoint(e: MouseEvent): { x: number; y: number } {
    const rect = (e.target as HTMLCanvasElement).getBoundingClientRect()
    return { x: e.clientX - rect.left, y: e.clientY - rect.top }
  }

  private onDown(e: MouseEvent): void {
    if (!this.state.canSubmit) return
    this.dragStart = this.canvasPoint(e)
    this.dragRect = null
  }

  private onMove(e: MouseEvent): void {
    if (!this.dragStart) return
    const point = this.canvasPoint(e)
    this.dragRect = {
      x: this.dragStart.x,
      y: this.dragStart.y,
      width: point.x - this.dragStart.x,
      height: point.y - this.dragStart.y,
    }
    this.redraw()
  }

  private onUp(e: MouseEvent): void {
    if (!this.dragStart) return
    const point = this.canvasPoint(e)
    const raw: DisplayRect = {
      x: this.dragStart.x,
      y: this.dragStart.y,
      width: point.x - this.dragStart.x,
      height: point.y - this.dragStart.y,
    }
    this.dragStart = null
    this.dragRect = null
    const snapped = snapDisplayRect(raw, this.view)
    const entry: PendingRect = { rect: snapped }
    if (this.mode === 'layout') {
      entry.category = this.el<HTMLSelectElement>('category').value
      if (!entry.category) {
        this.status('pick a category for layout mode', true)
        return
      }
      this.pending.push(entry)
    } else {
      this.pending = [entry] // repaint takes a single rect
    }
    this.redraw()
    this.updateControls()
  }

  private updateControls(): void {
    const submit = this.el<HTMLButtonElement>('submit')
    submit.disabled = !this.state.canSubmit || this.pending.length === 0
    this.el<HTMLButtonElement>('clear').disabled = this.pending.length === 0
  }

  async submit(): Promise<void> {
    if (!this.state.canSubmit || this.pending.length === 0) return
    const selections = this.pending
    this.status('applying edit...')
    this.updateControls()
    try {
      if (this.mode === 'repaint') {
        const region = displayRectToRegion(selections[0].rect, this.view)
        const freshSeed = Math.floor(Math.random() * 2 ** 31)
        const result = await this.state.submitRepaint(region, freshSeed)
        this.lastSwaps = []
        this.pending = []
        this.status(`repainted with seed ${freshSeed}`)
        void result
      } else {
        const items = selections.map((sel) => ({
          region: displayRectToRegion(sel.rect, this.view),
          category: sel.category ?? '',
        }))
        const pairingSeed = Math.floor(Math.random() * 2 ** 31)
        const result = await this.state.submitLayout(items, pairingSeed)
        this.lastSwaps = result.swaps ?? []
        this.pending = []
        this.status(`swapped ${this.lastSwaps.reduce((n, s) => n + s.pairs.length, 0)} block pairs`)
      }
      await this.refreshAttention()
      this.renderHistory()
      this.redraw()
    } catch (err) {
      // selection survives the failure so the user can adjust and retry
      this.status(this.describeError(err), true)
    } finally {
      this.updateControls()
    }
  }

  private describeError(err: unknown): string {
    if (err instanceof ApiError) return `server rejected the request: ${err.detail}`
    return err instanceof Error ? err.message : String(err)
  }

  private renderHistory(): void {
    const strip = this.el<HTMLUListElement>('history')
    strip.innerHTML = ''
    this.state.events.forEach((event, index) => {
      const item = this.root.createElement('li')
      const text = this.root.createElement('span')
      text.textContent = describeEvent(event, index)
      const revert = this.root.createElement('button')
      revert.textContent = 'revert to before'
      revert.addEventListener('click', () => {
        void this.revert(index)
      })
      item.appendChild(text)
      item.appendChild(revert)
      strip.appendChild(item)
    })
  }

  private async revert(step: number): Promise<void> {
    this.status(`reverting to step ${step}...`)
    try {
      await this.state.revertTo(step)
      this.lastSwaps = []
      await this.refreshAttention()
      this.renderHistory()
      this.redraw()
      this.status(`reverted; session ${this.state.sessionId}`)
    } catch (err) {
      this.status(this.describeError(err), true)
    } finally {
      this.updateControls()
    }
  }

  private redraw(): void {
    const canvas = this.el<HTMLCanvasElement>('board')
    const ctx = canvas.getContext('2d')
    if (!ctx) return
    ctx.clearRect(0, 0, canvas.width, canvas.height)
    if (this.state.lastResult) {
      drawLabelMap(ctx, this.state.lastResult.label_map, this.view)
    } else {
      ctx.fillStyle = '#15151a'
      ctx.fillRect(0, 0, canvas.width, canvas.height)
    }
    if (this.attentionOverlay) drawAttentionHeat(ctx, this.attentionOverlay, this.view)
    drawGrid(ctx, this.view)
    if (this.lastSwaps.length > 0) drawSwapArrows(ctx, this.lastSwaps, this.view)
    for (const sel of this.pending) {
      drawSelection(ctx, sel.rect, this.mode === 'repaint' ? '#ff5050' : '#50c8ff', sel.category)
    }
    if (this.dragRect) {
      const snapped = snapDisplayRect(this.dragRect, this.view)
      drawSelection(ctx, snapped, 'rgba(255,255,255,0.7)')
    }
  }
}

export function mount(doc: Document, baseUrl: string): StudioApp {
  const app = new StudioApp(doc, baseUrl)
  app.init()
  return app
}
