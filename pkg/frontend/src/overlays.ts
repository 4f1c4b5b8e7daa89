/**
 * Layer visibility state for a case view. Toggling is pure: the bundle's
 * data never changes, only which layers render.
 */

import type { BundleRecord } from './types.js';

export interface OverlayLayer {
  name: string;
  url: string;
  visible: boolean;
}

export interface CaseView {
  caseId: string;
  grade: number;
  probs: number[];
  explanationScore: number;
  modelVersion: string;
  reviewState: string;
  layers: OverlayLayer[];
}

/** Stable layer order: base image, CAM, composites, per-lesion masks. */
const LAYER_ORDER = [
  'image',
  'cam',
  'cam_union',
  'cam_union_image',
  'cam_MA',
  'cam_HE',
  'cam_EX',
  'cam_SE',
  'mask_MA',
  'mask_HE',
  'mask_EX',
  'mask_SE',
];

export function caseViewFromBundle(caseId: string, bundle: BundleRecord): CaseView {
  const names = Object.keys(bundle.overlay_urls).sort(
    (a, b) => LAYER_ORDER.indexOf(a) - LAYER_ORDER.indexOf(b),
  );
  return {
    caseId,
    grade: bundle.grade,
    probs: bundle.probs,
    explanationScore: bundle.explanation_score,
    modelVersion: bundle.model_version,
    reviewState: bundle.review_state,
    layers: names.map((name) => ({
      name,
      url: bundle.overlay_urls[name],
      visible: name === 'image' || name === 'cam_union_image',
    })),
  };
}

export function toggleLayer(view: CaseView, name: string): CaseView {
  return {
    ...view,
    layers: view.layers.map((layer) =>
      layer.name === name ? { ...layer, visible: !layer.visible } : layer,
    ),
  };
}

export function visibleLayers(view: CaseView): OverlayLayer[] {
  return view.layers.filter((layer) => layer.visible);
}

export function lesionLayerNames(view: CaseView): string[] {
  return view.layers.map((l) => l.name).filter((n) => n.startsWith('mask_'));
}
