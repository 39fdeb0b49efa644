// Thin typed client for the noiseloom session service.

import type {
  AttentionPayload,
  BlockRegion,
  GenerationPayload,
  HistoryPayload,
} from './types.js'
import { regionToBox } from './geometry.js'

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`)
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init)
  if (!res.ok) {
    let detail = res.statusText
    try {
      const body = await res.json()
      detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail)
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, detail)
  }
  return (await res.json()) as T
}

function post(body: unknown): RequestInit {
  return {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(body),
  }
}

export class NoiseloomClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`
  }

  async createSession(seed: number, prompt: string[], params?: Record<string, unknown>): Promise<string> {
    const res = await request<{ id: string }>(
      this.url('/sessions'),
      post({ seed, prompt, params: params ?? {} }),
    )
    return res.id
  }

  generate(sessionId: string): Promise<GenerationPayload> {
    return request(this.url(`/sessions/${sessionId}/generate`), post({}))
  }

  repaint(sessionId: string, region: BlockRegion, freshSeed: number): Promise<GenerationPayload> {
    return request(
      this.url(`/sessions/${sessionId}/repaint`),
      post({ box: regionToBox(region), fresh_seed: freshSeed }),
    )
  }

  repaintBlocks(
    sessionId: string,
    blocks: Array<[number, number]>,
    freshSeed: number,
  ): Promise<GenerationPayload> {
    return request(
      this.url(`/sessions/${sessionId}/repaint`),
      post({ blocks, fresh_seed: freshSeed }),
    )
  }

  layout(
    sessionId: string,
    items: Array<{ region: BlockRegion; category: string }>,
    pairingSeed: number,
  ): Promise<GenerationPayload> {
    return request(
      this.url(`/sessions/${sessionId}/layout`),
      post({
        guidance: {
          items: items.map((it) => ({ box: regionToBox(it.region), category: it.category })),
          pairing_seed: pairingSeed,
        },
      }),
    )
  }

  history(sessionId: string): Promise<HistoryPayload> {
    return request(this.url(`/sessions/${sessionId}/history`))
  }

  attention(sessionId: string, token: string): Promise<AttentionPayload> {
    return request(this.url(`/sessions/${sessionId}/attention/${encodeURIComponent(token)}`))
  }

  imageUrl(sessionId: string, scale = 16): string {
    return this.url(`/sessions/${sessionId}/image?scale=${scale}`)
  }

  async health(): Promise<boolean> {
    try {
      await request<{ ok: boolean }>(this.url('/healthz'))
      return true
    } catch {
      return false
    }
  }
}
