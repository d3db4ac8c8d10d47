// Typed client for the reader-study HTTP API.

export type SessionInfo = {
  session_id: string
  n_pairs: number
}

export type PairInfo = {
  pair_id: string
  left_url: string
  right_url: string
  index: number
  total: number
  anchors?: Record<string, string>
}

export type SubmitResult =
  | { kind: 'ok'; nextIndex: number }
  | { kind: 'conflict' }
  | { kind: 'rejected'; detail: string }

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message)
  }
}

export class StudyApi {
  constructor(
    private baseUrl: string = '',
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  url(path: string): string {
    return this.baseUrl + path
  }

  async createSession(rater: string, studyId: string): Promise<SessionInfo> {
    const resp = await this.fetchFn(this.url('/api/sessions'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ rater, study_id: studyId }),
    })
    if (resp.status !== 201) {
      throw new ApiError(`could not create session (${resp.status})`, resp.status)
    }
    return (await resp.json()) as SessionInfo
  }

  /** Current pair without advancing; null once the session is complete. */
  async nextPair(sessionId: string): Promise<PairInfo | null> {
    const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/next`))
    if (resp.status === 204) return null
    if (!resp.ok) throw new ApiError(`could not fetch next pair (${resp.status})`, resp.status)
    return (await resp.json()) as PairInfo
  }

  async submitResponse(
    sessionId: string,
    pairId: string,
    sharpness: number,
    noise: number,
  ): Promise<SubmitResult> {
    const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/responses`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ pair_id: pairId, sharpness, noise }),
    })
    if (resp.status === 200) {
      const body = (await resp.json()) as { next_index: number }
      return { kind: 'ok', nextIndex: body.next_index }
    }
    if (resp.status === 409) return { kind: 'conflict' }
    let detail = `status ${resp.status}`
    try {
      detail = ((await resp.json()) as { detail?: string }).detail ?? detail
    } catch {
      /* non-JSON error body */
    }
    return { kind: 'rejected', detail }
  }
}
