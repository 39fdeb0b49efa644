// Shared types mirroring the noiseloom HTTP API wire formats.

// Half-open block rectangle, rows [top, bottom), cols [left, right).
export interface BlockRegion {
  top: number
  left: number
  bottom: number
  right: number
}

// Rectangle in display (CSS pixel) coordinates.
export interface DisplayRect {
  x: number
  y: number
  width: number
  height: number
}

export interface SwapPair {
  in: [number, number]
  out: [number, number]
}

export interface SwapListPayload {
  pairing_seed: number
  pairs: SwapPair[]
}

export interface GuidanceItemPayload {
  box: [number, number, number, number]
  category: string
}

export interface GenerationPayload {
  label_map: number[][]
  label_names: string[]
  step0_attention: {
    tokens: string[]
    maps: Record<string, number[][]>
  }
  provenance: Record<string, unknown>
  swaps?: SwapListPayload[]
}

export interface HistoryEvent {
  type: 'repaint' | 'layout'
  blocks?: number[][]
  fresh_seed?: number
  guidance?: { items: GuidanceItemPayload[]; pairing_seed: number }
  swaps?: SwapListPayload[]
}

export interface HistoryPayload {
  id: string
  seed: number
  prompt: string[]
  events: HistoryEvent[]
}

export interface AttentionPayload {
  token: string
  rows: number
  cols: number
  values: number[][]
}

export type EditMode = 'repaint' | 'layout'

export interface CanvasSelection {
  mode: EditMode
  rects: Array<{ rect: DisplayRect; category?: string }>
  sessionId: string | null
}
