/**
 * Page wiring: case list, layered case view with annotation drawing,
 * feedback submission, and the fine-tune job panel.
 */

import { ReviewApi, ApiRequestError } from './api.js';
import { beginDrag, endDrag, moveDrag, previewRect, type CanvasTransform, type DragState } from './canvas.js';
import {
  addGeometry,
  canSubmit,
  emptyDraft,
  setCorrectedGrade,
  toPayload,
  undo,
  type DraftFeedback,
} from './draft.js';
import { applyPollFailure, applyPollSuccess, emptyPanel, isTerminal, type JobPanelState } from './jobs.js';
import { caseViewFromBundle, toggleLayer, visibleLayers, type CaseView } from './overlays.js';
import { LESIONS, type Lesion } from './types.js';

interface AppState {
  api: ReviewApi;
  view: CaseView | null;
  draft: DraftFeedback;
  tool: 'box' | 'circle';
  lesion: Lesion;
  drag: DragState | null;
  panel: JobPanelState;
  pollTimer: number | null;
}

const state: AppState = {
  api: new ReviewApi(''),
  view: null,
  draft: emptyDraft('reviewer'),
  tool: 'box',
  lesion: 'MA',
  drag: null,
  panel: emptyPanel(),
  pollTimer: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(text: string, kind: 'info' | 'error' = 'info'): void {
  const box = el<HTMLDivElement>('banner');
  box.textContent = text;
  box.className = `banner ${kind}`;
  box.hidden = text === '';
}

async function refreshCaseList(): Promise<void> {
  try {
    const cases = await state.api.listCases();
    const list = el<HTMLUListElement>('case-list');
    list.replaceChildren(
      ...cases.map((c) => {
        const item = document.createElement('li');
        const link = document.createElement('button');
        link.textContent = `${c.case_id} (${c.review_state})`;
        link.onclick = () => void openCase(c.case_id);
        item.appendChild(link);
        return item;
      }),
    );
    banner('');
  } catch {
    banner('backend unreachable, retrying…', 'error');
    window.setTimeout(() => void refreshCaseList(), 2000);
  }
}

async function openCase(caseId: string): Promise<void> {
  try {
    const bundle = await state.api.getBundle(caseId);
    state.view = caseViewFromBundle(caseId, bundle);
    state.draft = emptyDraft(state.draft.reviewer);
    renderCase();
  } catch (err) {
    if (err instanceof ApiRequestError && err.status === 404) {
      el<HTMLDivElement>('case-panel').hidden = true;
      banner(`case ${caseId} not found`, 'error');
      return;
    }
    banner('backend unreachable, retrying…', 'error');
    window.setTimeout(() => void openCase(caseId), 2000);
  }
}

function transform(): CanvasTransform {
  const stack = el<HTMLDivElement>('layer-stack');
  return {
    clientWidth: stack.clientWidth,
    clientHeight: stack.clientHeight,
    imageWidth: 64,
    imageHeight: 64,
  };
}

function renderCase(): void {
  const view = state.view;
  if (!view) return;
  el<HTMLDivElement>('case-panel').hidden = false;
  el<HTMLSpanElement>('grade').textContent = String(view.grade);
  el<HTMLSpanElement>('model-version').textContent = view.modelVersion;
  el<HTMLSpanElement>('explanation-score').textContent = view.explanationScore.toFixed(3);
  el<HTMLSpanElement>('probs').textContent = view.probs.map((p) => p.toFixed(2)).join(' ');

  const toggles = el<HTMLDivElement>('layer-toggles');
  toggles.replaceChildren(
    ...view.layers.map((layer) => {
      const label = document.createElement('label');
      const box = document.createElement('input');
      box.type = 'checkbox';
      box.checked = layer.visible;
      box.onchange = () => {
        state.view = toggleLayer(state.view!, layer.name);
        renderCase();
      };
      label.append(box, ` ${layer.name}`);
      return label;
    }),
  );

  const stack = el<HTMLDivElement>('layer-stack');
  stack.replaceChildren(
    ...visibleLayers(view).map((layer) => {
      const img = document.createElement('img');
      img.src = layer.url;
      img.alt = layer.name;
      img.className = 'layer';
      return img;
    }),
  );
  renderDraft();
}

function renderDraft(): void {
  el<HTMLSpanElement>('draft-count').textContent = String(state.draft.geometries.length);
  el<HTMLButtonElement>('submit').disabled = !canSubmit(state.draft);
  const marks = el<HTMLDivElement>('draft-marks');
  const t = transform();
  marks.replaceChildren(
    ...state.draft.geometries.map((g) => {
      const div = document.createElement('div');
      div.className = 'mark';
      const rect = previewRect(t, { kind: g.kind, start: g.points[0], current: g.points[1] });
      Object.assign(div.style, {
        left: `${rect.left}px`,
        top: `${rect.top}px`,
        width: `${rect.width}px`,
        height: `${rect.height}px`,
        borderRadius: g.kind === 'circle' ? '50%' : '0',
      });
      return div;
    }),
  );
}

function wireDrawing(): void {
  const stack = el<HTMLDivElement>('layer-stack');
  stack.onpointerdown = (ev) => {
    const rect = stack.getBoundingClientRect();
    state.drag = beginDrag(transform(), state.tool, ev.clientX - rect.left, ev.clientY - rect.top);
  };
  stack.onpointermove = (ev) => {
    if (!state.drag) return;
    const rect = stack.getBoundingClientRect();
    state.drag = moveDrag(transform(), state.drag, ev.clientX - rect.left, ev.clientY - rect.top);
  };
  stack.onpointerup = () => {
    if (!state.drag) return;
    const points = endDrag(state.drag);
    const t = transform();
    const { draft, kept } = addGeometry(
      state.draft, state.drag.kind, state.lesion, points, t.imageWidth, t.imageHeight,
    );
    state.draft = draft;
    state.drag = null;
    if (!kept) banner('zero-area drag discarded', 'info');
    renderDraft();
  };
}

async function submitDraft(): Promise<void> {
  const view = state.view;
  if (!view || !canSubmit(state.draft)) return;
  try {
    const payload = toPayload(state.draft);
    const { record_id } = await state.api.submitFeedback(view.caseId, payload);
    await state.api.acceptFeedback(record_id);
    banner(`feedback ${record_id} accepted`);
    state.draft = emptyDraft(state.draft.reviewer);
    await openCase(view.caseId);
    await refreshCaseList();
  } catch (err) {
    if (err instanceof ApiRequestError && err.status === 422) {
      banner(`rejected: ${err.body.message}`, 'error');  // draft stays intact
      return;
    }
    banner('submit failed, draft preserved — retry when the backend is back', 'error');
  }
}

function renderJobs(): void {
  const panel = state.panel;
  el<HTMLDivElement>('job-stale').hidden = !panel.stale;
  const status = el<HTMLDivElement>('job-status');
  if (!panel.job) {
    status.textContent = 'no job running';
    return;
  }
  const { job } = panel;
  status.textContent = `${job.job_id} [${job.kind}] ${job.state} ${(job.progress * 100).toFixed(0)}%`
    + (job.model_version ? ` -> v${job.model_version}` : '')
    + (job.message ? ` (${job.message})` : '');
  const rows = el<HTMLTableSectionElement>('job-metrics');
  rows.replaceChildren(
    ...panel.beforeAfter.map((row) => {
      const tr = document.createElement('tr');
      tr.innerHTML = `<td>${row.when}</td><td>${row.accuracy.toFixed(3)}</td><td>${row.kappa.toFixed(3)}</td>`;
      return tr;
    }),
  );
  const bar = el<HTMLProgressElement>('job-progress');
  bar.value = job.progress;
}

async function startJob(kind: string): Promise<void> {
  try {
    const job = await state.api.startFinetune(kind);
    state.panel = applyPollSuccess(emptyPanel(), job);
    renderJobs();
    if (state.pollTimer !== null) window.clearInterval(state.pollTimer);
    state.pollTimer = window.setInterval(async () => {
      try {
        const snapshot = await state.api.getJob(job.job_id);
        state.panel = applyPollSuccess(state.panel, snapshot);
        if (isTerminal(snapshot.state) && state.pollTimer !== null) {
          window.clearInterval(state.pollTimer);
          state.pollTimer = null;
          if (state.view) await openCase(state.view.caseId);
        }
      } catch {
        state.panel = applyPollFailure(state.panel);
      }
      renderJobs();
    }, 500);
  } catch (err) {
    banner(err instanceof ApiRequestError ? err.message : 'job submission failed', 'error');
  }
}

export function boot(baseUrl = ''): void {
  state.api = new ReviewApi(baseUrl);
  wireDrawing();
  el<HTMLSelectElement>('tool').onchange = (ev) => {
    state.tool = (ev.target as HTMLSelectElement).value as 'box' | 'circle';
  };
  const lesionSelect = el<HTMLSelectElement>('lesion');
  lesionSelect.replaceChildren(
    ...LESIONS.map((l) => {
      const opt = document.createElement('option');
      opt.value = l;
      opt.textContent = l;
      return opt;
    }),
  );
  lesionSelect.onchange = (ev) => {
    state.lesion = (ev.target as HTMLSelectElement).value as Lesion;
  };
  el<HTMLSelectElement>('grade-correction').onchange = (ev) => {
    const value = (ev.target as HTMLSelectElement).value;
    state.draft = setCorrectedGrade(state.draft, value === '' ? null : Number(value));
    renderDraft();
  };
  el<HTMLButtonElement>('undo').onclick = () => {
    state.draft = undo(state.draft);
    renderDraft();
  };
  el<HTMLButtonElement>('submit').onclick = () => void submitDraft();
  el<HTMLButtonElement>('job-seg').onclick = () => void startJob('seg_finetune');
  el<HTMLButtonElement>('job-grade').onclick = () => void startJob('grade_finetune');
  el<HTMLInputElement>('upload').onchange = async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const { case_id } = await state.api.uploadCase(file, file.name);
      await refreshCaseList();
      await openCase(case_id);
    } catch {
      banner('upload failed', 'error');
    }
  };
  void refreshCaseList();
}
