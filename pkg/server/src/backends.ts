/**
 * Backends the reference server can serve.
 *
 * echo      -- returns request tensors verbatim (plumbing validation)
 * gaussian  -- analytic noise prediction eps = sqrt(1 - alpha_bar(t)) * z,
 *              the Bayes-optimal predictor for unit-Gaussian clean latents
 * hook      -- wraps user-provided callables (a real model adapter)
 */

import { alphaBarAt, validateAlphaBar } from './schedule.js';
import type { Tensor } from './protocol.js';

export interface Backend {
  caps: string[];
  latentChannels: number;
  scale: number;
  denoise?(z: Tensor, t: number, cond: bigint): Tensor;
  encodeImage?(image: Tensor): Tensor;
  decodeLatent?(z: Tensor): Tensor;
  metric?(id: string, a: Tensor, b: Tensor): number;
}

export function echoBackend(): Backend {
  const identity = (t: Tensor): Tensor => ({ dims: [...t.dims], data: new Float32Array(t.data) });
  return {
    caps: ['denoise', 'encode', 'decode'],
    latentChannels: 3,
    scale: 1,
    denoise: (z) => identity(z),
    encodeImage: identity,
    decodeLatent: identity,
  };
}

export function gaussianOracleBackend(alphaBar: number[]): Backend {
  validateAlphaBar(alphaBar);
  return {
    caps: ['denoise'],
    latentChannels: 3,
    scale: 1,
    denoise(z: Tensor, t: number): Tensor {
      const factor = Math.sqrt(1 - alphaBarAt(alphaBar, t));
      const data = new Float32Array(z.data.length);
      for (let i = 0; i < data.length; i++) data[i] = factor * z.data[i];
      return { dims: [...z.dims], data };
    },
  };
}

export interface HookHandlers {
  denoise?(z: Tensor, t: number, cond: bigint): Tensor;
  encodeImage?(image: Tensor): Tensor;
  decodeLatent?(z: Tensor): Tensor;
  metric?(id: string, a: Tensor, b: Tensor): number;
  latentChannels?: number;
  scale?: number;
}

/** Advertises exactly the capabilities the provided handlers cover. */
export function hookBackend(handlers: HookHandlers): Backend {
  const caps: string[] = [];
  if (handlers.denoise) caps.push('denoise');
  if (handlers.encodeImage) caps.push('encode');
  if (handlers.decodeLatent) caps.push('decode');
  if (handlers.metric) caps.push('metric');
  if (caps.length === 0) throw new Error('hook backend needs at least one handler');
  return {
    caps,
    latentChannels: handlers.latentChannels ?? 3,
    scale: handlers.scale ?? 1,
    denoise: handlers.denoise,
    encodeImage: handlers.encodeImage,
    decodeLatent: handlers.decodeLatent,
    metric: handlers.metric,
  };
}
