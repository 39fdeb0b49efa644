// Pure view models for the canvas overlays: label colors, attention heat,
// swap arrows.  Kept DOM-free so they are directly testable.

import type { AttentionPayload, SwapListPayload } from './types.js'

// Mirrors the service's fixed label palette (background first).
export const LABEL_PALETTE: Array<[number, number, number]> = [
  [24, 24, 28],
  [230, 80, 60],
  [70, 150, 230],
  [90, 200, 110],
  [240, 190, 60],
  [170, 100, 220],
  [240, 130, 200],
  [110, 210, 220],
  [250, 150, 80],
  [150, 160, 170],
  [120, 120, 60],
]

export function labelColor(label: number): [number, number, number] {
  const index = label + 1 // background (-1) sits at palette slot 0
  return LABEL_PALETTE[Math.max(0, Math.min(index, LABEL_PALETTE.length - 1))]
}

// Attention value -> rgba heat cell; intensity is the value scaled by the
// map's own maximum so low-contrast maps stay visible.
export interface HeatCell {
  row: number
  col: number
  alpha: number
}

export function attentionHeat(attn: AttentionPayload): HeatCell[] {
  let max = 0
  for (const row of attn.values) for (const v of row) max = Math.max(max, v)
  const cells: HeatCell[] = []
  for (let r = 0; r < attn.rows; r++) {
    for (let c = 0; c < attn.cols; c++) {
      cells.push({ row: r, col: c, alpha: max > 0 ? attn.values[r][c] / max : 0 })
    }
  }
  return cells
}

export interface ArrowSegment {
  fromX: number
  fromY: number
  toX: number
  toY: number
}

// One arrow per swap pair, drawn source-block center -> target-block center.
export function swapArrows(swaps: SwapListPayload[], cellPx: number): ArrowSegment[] {
  const center = (block: [number, number]) => ({
    x: (block[1] + 0.5) * cellPx,
    y: (block[0] + 0.5) * cellPx,
  })
  const segments: ArrowSegment[] = []
  for (const list of swaps) {
    for (const pair of list.pairs) {
      const from = center(pair.in)
      const to = center(pair.out)
      segments.push({ fromX: from.x, fromY: from.y, toX: to.x, toY: to.y })
    }
  }
  return segments
}
