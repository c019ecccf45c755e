import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiError, SpmtClient } from '../src/api.js';

const METRICS = {
  content: 0, cosmetic: 0.1, style: 0.2, makeup: 0.3, total: 3.5, ssim: 0.9,
};

function mockFetch(response: Response): ReturnType<typeof vi.fn> {
  const fn = vi.fn(async () => response);
  vi.stubGlobal('fetch', fn);
  return fn;
}

afterEach(() => vi.unstubAllGlobals());

describe('SpmtClient', () => {
  const client = new SpmtClient('http://svc:8731/');

  it('createSession posts multipart and returns the id', async () => {
    const fetchFn = mockFetch(
      new Response(JSON.stringify({ id: 'abc123' }), { status: 201 }),
    );
    const id = await client.createSession(new Blob(['i']), new Blob(['m']));
    expect(id).toBe('abc123');
    const [url, init] = fetchFn.mock.calls[0];
    expect(url).toBe('http://svc:8731/sessions'); // trailing slash stripped
    expect(init.method).toBe('POST');
    expect([...init.body.keys()].sort()).toEqual(['image', 'mask']);
  });

  it('addReference returns the refId', async () => {
    mockFetch(new Response(JSON.stringify({ refId: 2 }), { status: 201 }));
    const refId = await client.addReference('s', new Blob(), new Blob());
    expect(refId).toBe(2);
  });

  it('transfer sends the recipe JSON and parses X-Metrics', async () => {
    const fetchFn = mockFetch(
      new Response(new Blob([new Uint8Array([1, 2, 3])]), {
        status: 200,
        headers: { 'X-Metrics': JSON.stringify(METRICS) },
      }),
    );
    const recipe = {
      shade: 0.5,
      refWeights: [1],
      partAssignment: null,
      transferParts: ['lips' as const],
      removal: false,
    };
    const result = await client.transfer('sid', recipe);
    expect(result.metrics).toEqual(METRICS);
    expect(result.image.size).toBe(3);
    const [url, init] = fetchFn.mock.calls[0];
    expect(url).toBe('http://svc:8731/sessions/sid/transfer');
    expect(JSON.parse(init.body)).toEqual(recipe);
  });

  it('surfaces service errors with status and message', async () => {
    mockFetch(
      new Response(JSON.stringify({ error: 'shade must lie in [0, 1]' }), {
        status: 422,
      }),
    );
    const bad = {
      shade: 2, refWeights: [1], partAssignment: null,
      transferParts: [], removal: false,
    };
    const err = await client.transfer('sid', bad).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.message).toContain('shade');
  });

  it('stats returns the cache counters', async () => {
    mockFetch(
      new Response(
        JSON.stringify({ correspondenceComputations: 1, cacheHits: 5 }),
        { status: 200 },
      ),
    );
    expect(await client.stats('sid')).toEqual({
      correspondenceComputations: 1,
      cacheHits: 5,
    });
  });

  it('healthz is false when fetch rejects', async () => {
    vi.stubGlobal('fetch', vi.fn(async () => {
      throw new Error('connection refused');
    }));
    expect(await client.healthz()).toBe(false);
  });
});
