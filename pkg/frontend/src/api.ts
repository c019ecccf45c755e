/** Typed client for the spmt HTTP service. Every image shown in the studio
 * comes from here; the UI never computes pixels itself. */

export interface MetricReport {
  content: number;
  cosmetic: number;
  style: number;
  makeup: number;
  total: number;
  ssim: number;
}

export type Part = 'lips' | 'eyes' | 'skin';

/** JSON body of POST /sessions/{id}/transfer. */
export interface RecipeBody {
  shade: number;
  refWeights: number[];
  partAssignment: Partial<Record<Part, number>> | null;
  transferParts: Part[];
  removal: boolean;
  mode?: string;
  beta?: number;
  alphas?: number[];
  noHm?: boolean;
  feather?: number;
}

export interface TransferResult {
  image: Blob;
  metrics: MetricReport;
}

export interface SessionStats {
  correspondenceComputations: number;
  cacheHits: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function errorFrom(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body.error === 'string') detail = body.error;
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(response.status, detail);
}

export class SpmtClient {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, '') + path;
  }

  async healthz(): Promise<boolean> {
    try {
      const r = await fetch(this.url('/healthz'));
      return r.ok;
    } catch {
      return false;
    }
  }

  async createSession(image: Blob, mask: Blob): Promise<string> {
    const form = new FormData();
    form.append('image', image, 'image.png');
    form.append('mask', mask, 'mask.png');
    const r = await fetch(this.url('/sessions'), { method: 'POST', body: form });
    if (!r.ok) throw await errorFrom(r);
    return (await r.json()).id as string;
  }

  async addReference(sessionId: string, image: Blob, mask: Blob): Promise<number> {
    const form = new FormData();
    form.append('image', image, 'image.png');
    form.append('mask', mask, 'mask.png');
    const r = await fetch(this.url(`/sessions/${sessionId}/references`), {
      method: 'POST',
      body: form,
    });
    if (!r.ok) throw await errorFrom(r);
    return (await r.json()).refId as number;
  }

  async transfer(
    sessionId: string,
    recipe: RecipeBody,
    signal?: AbortSignal,
  ): Promise<TransferResult> {
    const r = await fetch(this.url(`/sessions/${sessionId}/transfer`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(recipe),
      signal,
    });
    if (!r.ok) throw await errorFrom(r);
    const metricsHeader = r.headers.get('X-Metrics');
    if (!metricsHeader) throw new ApiError(r.status, 'missing X-Metrics header');
    return {
      image: await r.blob(),
      metrics: JSON.parse(metricsHeader) as MetricReport,
    };
  }

  async stats(sessionId: string): Promise<SessionStats> {
    const r = await fetch(this.url(`/sessions/${sessionId}/stats`));
    if (!r.ok) throw await errorFrom(r);
    return (await r.json()) as SessionStats;
  }
}
