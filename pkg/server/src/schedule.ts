/** Diffusion schedule helpers matching the client's default convention. */

export interface ScheduleOptions {
  steps: number;
  betaStart?: number;
  betaEnd?: number;
  trainSteps?: number;
}

/**
 * alpha_bar for timesteps 1..steps: a linear beta ramp over trainSteps,
 * cumulative product, strided uniformly to the inference step count.
 */
export function linearBetaAlphaBar({
  steps,
  betaStart = 8.5e-4,
  betaEnd = 1.2e-2,
  trainSteps = 1000,
}: ScheduleOptions): number[] {
  if (!(steps >= 1 && steps <= trainSteps)) {
    throw new Error(`steps must be in 1..${trainSteps}, got ${steps}`);
  }
  if (!(betaStart > 0 && betaStart <= betaEnd && betaEnd < 1)) {
    throw new Error('betas must satisfy 0 < betaStart <= betaEnd < 1');
  }
  const full: number[] = [];
  let prod = 1;
  for (let i = 0; i < trainSteps; i++) {
    const beta = trainSteps === 1 ? betaStart : betaStart + ((betaEnd - betaStart) * i) / (trainSteps - 1);
    prod *= 1 - beta;
    full.push(prod);
  }
  const out: number[] = [];
  for (let k = 1; k <= steps; k++) {
    out.push(full[Math.floor((k * trainSteps) / steps) - 1]);
  }
  return out;
}

export function validateAlphaBar(alphaBar: number[]): number[] {
  if (alphaBar.length < 1) throw new Error('alpha_bar must be non-empty');
  for (let i = 0; i < alphaBar.length; i++) {
    const v = alphaBar[i];
    if (!(v > 0 && v < 1)) throw new Error(`alpha_bar[${i}] = ${v} outside (0, 1)`);
    if (i > 0 && !(v < alphaBar[i - 1])) throw new Error('alpha_bar must be strictly decreasing');
  }
  return alphaBar;
}

/** alpha_bar at timestep index t in 0..steps, with alpha_bar(0) == 1. */
export function alphaBarAt(alphaBar: number[], t: number): number {
  if (!Number.isInteger(t) || t < 0 || t > alphaBar.length) {
    throw new Error(`timestep ${t} outside 0..${alphaBar.length}`);
  }
  return t === 0 ? 1 : alphaBar[t - 1];
}
