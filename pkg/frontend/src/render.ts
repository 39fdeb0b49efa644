// Canvas painting: label map, block grid, attention heat, selections, arrows.

import { attentionHeat, labelColor, swapArrows } from './overlay.js'
import type { GridView } from './geometry.js'
import type { AttentionPayload, DisplayRect, SwapListPayload } from './types.js'

export function drawLabelMap(
  ctx: CanvasRenderingContext2D,
  labels: number[][],
  view: GridView,
): void {
  for (let r = 0; r < labels.length; r++) {
    for (let c = 0; c < labels[r].length; c++) {
      const [red, green, blue] = labelColor(labels[r][c])
      ctx.fillStyle = `rgb(${red},${green},${blue})`
      ctx.fillRect(c * view.cellPx, r * view.cellPx, view.cellPx, view.cellPx)
    }
  }
}

export function drawGrid(ctx: CanvasRenderingContext2D, view: GridView): void {
  ctx.strokeStyle = 'rgba(255,255,255,0.15)'
  ctx.lineWidth = 1
  for (let r = 0; r <= view.blockRows; r++) {
    ctx.beginPath()
    ctx.moveTo(0, r * view.cellPx)
    ctx.lineTo(view.blockCols * view.cellPx, r * view.cellPx)
    ctx.stroke()
  }
  for (let c = 0; c <= view.blockCols; c++) {
    ctx.beginPath()
    ctx.moveTo(c * view.cellPx, 0)
    ctx.lineTo(c * view.cellPx, view.blockRows * view.cellPx)
    ctx.stroke()
  }
}

export function drawAttentionHeat(
  ctx: CanvasRenderingContext2D,
  attn: AttentionPayload,
  view: GridView,
): void {
  for (const cell of attentionHeat(attn)) {
    ctx.fillStyle = `rgba(255, 215, 0, ${(0.65 * cell.alpha).toFixed(3)})`
    ctx.fillRect(cell.col * view.cellPx, cell.row * view.cellPx, view.cellPx, view.cellPx)
  }
}

export function drawSelection(
  ctx: CanvasRenderingContext2D,
  rect: DisplayRect,
  color: string,
  label?: string,
): void {
  ctx.strokeStyle = color
  ctx.lineWidth = 2
  ctx.strokeRect(rect.x, rect.y, rect.width, rect.height)
  if (label) {
    ctx.fillStyle = color
    ctx.font = '12px sans-serif'
    ctx.fillText(label, rect.x + 3, rect.y + 13)
  }
}

export function drawSwapArrows(
  ctx: CanvasRenderingContext2D,
  swaps: SwapListPayload[],
  view: GridView,
): void {
  ctx.strokeStyle = 'rgba(255,255,255,0.85)'
  ctx.fillStyle = 'rgba(255,255,255,0.85)'
  ctx.lineWidth = 1.5
  for (const seg of swapArrows(swaps, view.cellPx)) {
    ctx.beginPath()
    ctx.moveTo(seg.fromX, seg.fromY)
    ctx.lineTo(seg.toX, seg.toY)
    ctx.stroke()
    const angle = Math.atan2(seg.toY - seg.fromY, seg.toX - seg.fromX)
    const size = 6
    ctx.beginPath()
    ctx.moveTo(seg.toX, seg.toY)
    ctx.lineTo(seg.toX - size * Math.cos(angle - 0.4), seg.toY - size * Math.sin(angle - 0.4))
    ctx.lineTo(seg.toX - size * Math.cos(angle + 0.4), seg.toY - size * Math.sin(angle + 0.4))
    ctx.closePath()
    ctx.fill()
  }
}
