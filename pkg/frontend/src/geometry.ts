// Display-rect <-> block-region conversion with outward snapping.
//
// The engine only understands whole blocks, so every drawn rectangle is
// snapped outward to the covering block region before it leaves the browser.
// Snapping a rect that already sits on block boundaries is a no-op, which is
// what keeps API round trips drift-free.

import type { BlockRegion, DisplayRect } from './types.js'

export interface GridView {
  blockRows: number
  blockCols: number
  cellPx: number // size of one block on the canvas, CSS pixels
}

export function displayRectToRegion(rect: DisplayRect, view: GridView): BlockRegion {
  const x0 = Math.min(rect.x, rect.x + rect.width)
  const y0 = Math.min(rect.y, rect.y + rect.height)
  const x1 = Math.max(rect.x, rect.x + rect.width)
  const y1 = Math.max(rect.y, rect.y + rect.height)
  const clamp = (v: number, hi: number) => Math.max(0, Math.min(v, hi))
  let top = clamp(Math.floor(y0 / view.cellPx), view.blockRows - 1)
  let left = clamp(Math.floor(x0 / view.cellPx), view.blockCols - 1)
  let bottom = clamp(Math.ceil(y1 / view.cellPx), view.blockRows)
  let right = clamp(Math.ceil(x1 / view.cellPx), view.blockCols)
  // a degenerate drag still selects the block under the cursor
  if (bottom <= top) bottom = top + 1
  if (right <= left) right = left + 1
  return { top, left, bottom, right }
}

export function regionToDisplayRect(region: BlockRegion, view: GridView): DisplayRect {
  return {
    x: region.left * view.cellPx,
    y: region.top * view.cellPx,
    width: (region.right - region.left) * view.cellPx,
    height: (region.bottom - region.top) * view.cellPx,
  }
}

// Snap = convert to blocks and back; idempotent by construction.
export function snapDisplayRect(rect: DisplayRect, view: GridView): DisplayRect {
  return regionToDisplayRect(displayRectToRegion(rect, view), view)
}

export function regionsEqual(a: BlockRegion, b: BlockRegion): boolean {
  return a.top === b.top && a.left === b.left && a.bottom === b.bottom && a.right === b.right
}

export function regionToBox(region: BlockRegion): [number, number, number, number] {
  return [region.top, region.left, region.bottom, region.right]
}

export function regionBlocks(region: BlockRegion): Array<[number, number]> {
  const blocks: Array<[number, number]> = []
  for (let r = region.top; r < region.bottom; r++) {
    for (let c = region.left; c < region.right; c++) {
      blocks.push([r, c])
    }
  }
  return blocks
}
