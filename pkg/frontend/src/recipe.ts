/** Studio state and the pure reducers that edit it. The only invariant that
 * matters to the service is enforced here: submitted weights always sum to 1,
 * and a recipe is never built while that cannot be satisfied. */

import type { MetricReport, Part, RecipeBody } from './api.js';

export const ALL_PARTS: Part[] = ['lips', 'eyes', 'skin'];

export interface ReferenceEntry {
  refId: number;
  /** raw (unnormalized) mixing weight as set by the user's slider */
  weight: number;
  thumbnailUrl: string | null;
}

export interface StudioState {
  sessionId: string | null;
  references: ReferenceEntry[];
  shade: number;
  partAssignment: Partial<Record<Part, number>> | null;
  transferParts: Part[];
  removal: boolean;
  pendingRequest: boolean;
  lastResult: { imageUrl: string; metrics: MetricReport } | null;
}

export function initialState(): StudioState {
  return {
    sessionId: null,
    references: [],
    shade: 1.0,
    partAssignment: null,
    transferParts: [...ALL_PARTS],
    removal: false,
    pendingRequest: false,
    lastResult: null,
  };
}

/** Scale weights to sum to 1. All-zero (or empty) input falls back to an
 * equal split so a recipe can always be submitted. */
export function normalizeWeights(weights: number[]): number[] {
  if (weights.length === 0) return [];
  if (weights.some((w) => w < 0 || !Number.isFinite(w))) {
    throw new Error('weights must be finite and nonnegative');
  }
  const total = weights.reduce((a, b) => a + b, 0);
  if (total === 0) return weights.map(() => 1 / weights.length);
  return weights.map((w) => w / total);
}

export function setShade(state: StudioState, shade: number): StudioState {
  return { ...state, shade: Math.min(1, Math.max(0, shade)) };
}

export function setWeight(
  state: StudioState,
  refId: number,
  weight: number,
): StudioState {
  return {
    ...state,
    references: state.references.map((r) =>
      r.refId === refId ? { ...r, weight: Math.max(0, weight) } : r,
    ),
  };
}

export function assignPart(
  state: StudioState,
  part: Part,
  refId: number,
): StudioState {
  if (!state.references.some((r) => r.refId === refId)) {
    throw new Error(`no reference with id ${refId}`);
  }
  return {
    ...state,
    partAssignment: { ...(state.partAssignment ?? {}), [part]: refId },
  };
}

export function unassignPart(state: StudioState, part: Part): StudioState {
  if (state.partAssignment === null) return state;
  const next = { ...state.partAssignment };
  delete next[part];
  return {
    ...state,
    partAssignment: Object.keys(next).length > 0 ? next : null,
  };
}

export function toggleRemoval(state: StudioState): StudioState {
  if (state.references.length === 0) return state; // control is disabled
  return { ...state, removal: !state.removal };
}

export function canTransfer(state: StudioState): boolean {
  return state.sessionId !== null && state.references.length > 0;
}

/** Turn the current state into the service recipe body. Throws rather than
 * letting an invalid recipe reach the network. */
export function buildRecipe(state: StudioState): RecipeBody {
  if (!canTransfer(state)) {
    throw new Error('need a session and at least one reference');
  }
  return {
    shade: state.shade,
    refWeights: normalizeWeights(state.references.map((r) => r.weight)),
    partAssignment: state.partAssignment,
    transferParts: state.transferParts,
    removal: state.removal,
  };
}
