// Session state: one in-flight mutation at a time, history mirror, revert.
//
// Revert-to-step needs no dedicated endpoint: the service's history events
// are replayable, so reverting to step k creates a fresh session from the
// same seed and re-applies events [0, k).

import { NoiseloomClient } from './api.js'
import type { BlockRegion, GenerationPayload, HistoryEvent } from './types.js'

export interface SessionConfig {
  seed: number
  prompt: string[]
  params?: Record<string, unknown>
}

export class SessionState {
  sessionId: string | null = null
  config: SessionConfig | null = null
  lastResult: GenerationPayload | null = null
  events: HistoryEvent[] = []
  busy = false

  constructor(private client: NoiseloomClient) {}

  get canSubmit(): boolean {
    return this.sessionId !== null && !this.busy
  }

  async start(config: SessionConfig): Promise<GenerationPayload> {
    this.busy = true
    try {
      this.sessionId = await this.client.createSession(config.seed, config.prompt, config.params)
      this.config = config
      this.events = []
      this.lastResult = await this.client.generate(this.sessionId)
      return this.lastResult
    } finally {
      this.busy = false
    }
  }

  private async refreshHistory(): Promise<void> {
    if (!this.sessionId) return
    const payload = await this.client.history(this.sessionId)
    this.events = payload.events
  }

  async submitRepaint(region: BlockRegion, freshSeed: number): Promise<GenerationPayload> {
    if (!this.sessionId) throw new Error('no active session')
    this.busy = true
    try {
      this.lastResult = await this.client.repaint(this.sessionId, region, freshSeed)
      await this.refreshHistory()
      return this.lastResult
    } finally {
      this.busy = false
    }
  }

  async submitLayout(
    items: Array<{ region: BlockRegion; category: string }>,
    pairingSeed: number,
  ): Promise<GenerationPayload> {
    if (!this.sessionId) throw new Error('no active session')
    this.busy = true
    try {
      this.lastResult = await this.client.layout(this.sessionId, items, pairingSeed)
      await this.refreshHistory()
      return this.lastResult
    } finally {
      this.busy = false
    }
  }

  // Revert to the state *before* event index `step` by replaying the prefix.
  async revertTo(step: number): Promise<GenerationPayload> {
    if (!this.sessionId || !this.config) throw new Error('no active session')
    const prefix = this.events.slice(0, step)
    this.busy = true
    try {
      const fresh = await this.client.createSession(
        this.config.seed,
        this.config.prompt,
        this.config.params,
      )
      for (const event of prefix) {
        if (event.type === 'repaint') {
          const blocks = (event.blocks ?? []).map((b) => [b[0], b[1]] as [number, number])
          await this.client.repaintBlocks(fresh, blocks, event.fresh_seed ?? 0)
        } else if (event.type === 'layout' && event.guidance) {
          await this.client.layout(
            fresh,
            event.guidance.items.map((it) => ({
              region: { top: it.box[0], left: it.box[1], bottom: it.box[2], right: it.box[3] },
              category: it.category,
            })),
            event.guidance.pairing_seed,
          )
        }
      }
      this.sessionId = fresh
      this.lastResult = await this.client.generate(fresh)
      await this.refreshHistory()
      return this.lastResult
    } finally {
      this.busy = false
    }
  }
}

export function boundingRegion(blocks: number[][]): BlockRegion {
  if (blocks.length === 0) throw new Error('empty block list')
  const rows = blocks.map((b) => b[0])
  const cols = blocks.map((b) => b[1])
  return {
    top: Math.min(...rows),
    left: Math.min(...cols),
    bottom: Math.max(...rows) + 1,
    right: Math.max(...cols) + 1,
  }
}

export function describeEvent(event: HistoryEvent, index: number): string {
  if (event.type === 'repaint') {
    return `${index + 1}. repaint ${event.blocks?.length ?? 0} blocks (seed ${event.fresh_seed})`
  }
  const items = event.guidance?.items ?? []
  const cats = items.map((it) => it.category).join(', ')
  return `${index + 1}. layout ${cats} (${event.swaps?.reduce((n, s) => n + s.pairs.length, 0) ?? 0} swaps)`
}
