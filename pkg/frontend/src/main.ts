/** DOM wiring for the studio page. All logic lives in the imported modules;
 * this file only moves values between controls, state, and the client. */

import { ApiError, SpmtClient } from './api.js';
import type { MetricReport } from './api.js';
import { LatestWins, debounceLatest } from './debounce.js';
import {
  ALL_PARTS,
  StudioState,
  assignPart,
  buildRecipe,
  canTransfer,
  initialState,
  setShade,
  setWeight,
  toggleRemoval,
  unassignPart,
} from './recipe.js';
import { clipForFraction, fractionFromPointer } from './slider.js';

const SERVICE_URL =
  new URLSearchParams(location.search).get('service') ?? 'http://127.0.0.1:8731';
const DEBOUNCE_MS = 100;

const client = new SpmtClient(SERVICE_URL);
const gate = new LatestWins();
let state: StudioState = initialState();
let sourceUrl: string | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const toast = el<HTMLDivElement>('toast');

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add('visible');
  setTimeout(() => toast.classList.remove('visible'), 4000);
}

function renderMetrics(metrics: MetricReport): void {
  el<HTMLDivElement>('metrics').textContent = [
    `content ${metrics.content.toFixed(4)}`,
    `cosmetic ${metrics.cosmetic.toFixed(4)}`,
    `style ${metrics.style.toFixed(4)}`,
    `makeup ${metrics.makeup.toFixed(4)}`,
    `total ${metrics.total.toFixed(4)}`,
    `ssim ${metrics.ssim.toFixed(4)}`,
  ].join('  ·  ');
}

function renderReferences(): void {
  const list = el<HTMLDivElement>('references');
  list.innerHTML = '';
  for (const ref of state.references) {
    const row = document.createElement('div');
    row.className = 'ref-row';
    if (ref.thumbnailUrl) {
      const img = document.createElement('img');
      img.src = ref.thumbnailUrl;
      img.alt = `reference ${ref.refId}`;
      row.appendChild(img);
    }
    const slider = document.createElement('input');
    slider.type = 'range';
    slider.min = '0';
    slider.max = '100';
    slider.value = String(Math.round(ref.weight * 100));
    slider.addEventListener('input', () => {
      state = setWeight(state, ref.refId, Number(slider.value) / 100);
      scheduleTransfer();
    });
    row.appendChild(slider);
    list.appendChild(row);
  }
  renderAssignments();
  el<HTMLInputElement>('removal').disabled = state.references.length === 0;
}

function renderAssignments(): void {
  const panel = el<HTMLDivElement>('assignments');
  panel.innerHTML = '';
  for (const part of ALL_PARTS) {
    const label = document.createElement('label');
    label.textContent = `${part}: `;
    const select = document.createElement('select');
    const none = document.createElement('option');
    none.value = '';
    none.textContent = 'fused';
    select.appendChild(none);
    for (const ref of state.references) {
      const opt = document.createElement('option');
      opt.value = String(ref.refId);
      opt.textContent = `ref ${ref.refId}`;
      select.appendChild(opt);
    }
    const assigned = state.partAssignment?.[part];
    select.value = assigned === undefined ? '' : String(assigned);
    select.addEventListener('change', () => {
      state =
        select.value === ''
          ? unassignPart(state, part)
          : assignPart(state, part, Number(select.value));
      scheduleTransfer();
    });
    label.appendChild(select);
    panel.appendChild(label);
  }
}

async function runTransfer(): Promise<void> {
  if (!canTransfer(state)) return;
  state = { ...state, pendingRequest: true };
  try {
    const result = await gate.run((signal) =>
      client.transfer(state.sessionId!, buildRecipe(state), signal),
    );
    if (result === null) return; // superseded by a newer request
    if (state.lastResult) URL.revokeObjectURL(state.lastResult.imageUrl);
    const imageUrl = URL.createObjectURL(result.image);
    state = { ...state, lastResult: { imageUrl, metrics: result.metrics } };
    el<HTMLImageElement>('after').src = imageUrl;
    renderMetrics(result.metrics);
  } catch (err) {
    const message = err instanceof ApiError ? err.message : 'service unreachable';
    showToast(message);
  } finally {
    state = { ...state, pendingRequest: false };
  }
}

const debouncedTransfer = debounceLatest(() => void runTransfer(), DEBOUNCE_MS);

function scheduleTransfer(): void {
  debouncedTransfer.call();
}

function fileOf(id: string): File | null {
  return el<HTMLInputElement>(id).files?.[0] ?? null;
}

async function onCreateSession(): Promise<void> {
  const image = fileOf('source-image');
  const mask = fileOf('source-mask');
  if (!image || !mask) {
    showToast('pick a source image and its parse mask first');
    return;
  }
  try {
    const id = await client.createSession(image, mask);
    state = { ...initialState(), sessionId: id };
    if (sourceUrl) URL.revokeObjectURL(sourceUrl);
    sourceUrl = URL.createObjectURL(image);
    el<HTMLImageElement>('before').src = sourceUrl;
    el<HTMLImageElement>('after').src = sourceUrl;
    renderReferences();
  } catch (err) {
    showToast(err instanceof ApiError ? err.message : 'service unreachable');
  }
}

async function onAddReference(): Promise<void> {
  if (!state.sessionId) {
    showToast('create a session first');
    return;
  }
  const image = fileOf('ref-image');
  const mask = fileOf('ref-mask');
  if (!image || !mask) {
    showToast('pick a reference image and its parse mask');
    return;
  }
  try {
    const refId = await client.addReference(state.sessionId, image, mask);
    state = {
      ...state,
      references: [
        ...state.references,
        { refId, weight: 1, thumbnailUrl: URL.createObjectURL(image) },
      ],
    };
    renderReferences();
    scheduleTransfer();
  } catch (err) {
    showToast(err instanceof ApiError ? err.message : 'service unreachable');
  }
}

function wireCompareView(): void {
  const view = el<HTMLDivElement>('compare');
  const afterWrap = el<HTMLDivElement>('after-wrap');
  const divider = el<HTMLDivElement>('divider');
  let dragging = false;
  const update = (x: number) => {
    const rect = view.getBoundingClientRect();
    const f = fractionFromPointer(x, rect.left, rect.width);
    afterWrap.style.clipPath = clipForFraction(f);
    divider.style.left = `${f * 100}%`;
  };
  divider.addEventListener('pointerdown', (e) => {
    dragging = true;
    divider.setPointerCapture(e.pointerId);
  });
  divider.addEventListener('pointermove', (e) => {
    if (dragging) update(e.clientX);
  });
  divider.addEventListener('pointerup', () => {
    dragging = false;
  });
  update(view.getBoundingClientRect().left + view.getBoundingClientRect().width / 2);
}

function wireControls(): void {
  el<HTMLButtonElement>('create-session').addEventListener('click', () => {
    void onCreateSession();
  });
  el<HTMLButtonElement>('add-reference').addEventListener('click', () => {
    void onAddReference();
  });
  const shade = el<HTMLInputElement>('shade');
  shade.addEventListener('input', () => {
    state = setShade(state, Number(shade.value) / 100);
    el<HTMLSpanElement>('shade-value').textContent = state.shade.toFixed(2);
    scheduleTransfer();
  });
  const removal = el<HTMLInputElement>('removal');
  removal.addEventListener('change', () => {
    state = toggleRemoval(state);
    removal.checked = state.removal;
    scheduleTransfer();
  });
  wireCompareView();
}

void client.healthz().then((ok) => {
  if (!ok) showToast(`service not reachable at ${SERVICE_URL}`);
});
wireControls();
