/**
 * Reference backend entry point.
 *
 *   node dist/main.js --port 9944 --backend gaussian --steps 50
 *   node dist/main.js --stdio --backend echo
 *
 * The gaussian backend derives its schedule from --steps/--beta-start/
 * --beta-end/--train-steps (matching the client default) or loads an
 * explicit alpha_bar list from --alpha-bar-file (JSON array or an object
 * with an "alpha_bar" key).
 */

import { readFileSync } from 'node:fs';
import { parseArgs } from 'node:util';

import { echoBackend, gaussianOracleBackend, type Backend } from './backends.js';
import { linearBetaAlphaBar, validateAlphaBar } from './schedule.js';
import { listen, serveStreams } from './server.js';

function buildBackend(values: Record<string, unknown>): Backend {
  const kind = (values.backend as string) ?? 'echo';
  if (kind === 'echo') return echoBackend();
  if (kind !== 'gaussian') throw new Error(`unknown backend ${kind}; use echo or gaussian`);
  if (values['alpha-bar-file']) {
    const doc = JSON.parse(readFileSync(values['alpha-bar-file'] as string, 'utf-8'));
    const alphaBar = Array.isArray(doc) ? doc : doc.alpha_bar;
    return gaussianOracleBackend(validateAlphaBar(alphaBar));
  }
  return gaussianOracleBackend(
    linearBetaAlphaBar({
      steps: Number(values.steps ?? 50),
      betaStart: Number(values['beta-start'] ?? 8.5e-4),
      betaEnd: Number(values['beta-end'] ?? 1.2e-2),
      trainSteps: Number(values['train-steps'] ?? 1000),
    }),
  );
}

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      host: { type: 'string', default: '127.0.0.1' },
      port: { type: 'string', default: '9944' },
      stdio: { type: 'boolean', default: false },
      backend: { type: 'string', default: 'echo' },
      steps: { type: 'string' },
      'beta-start': { type: 'string' },
      'beta-end': { type: 'string' },
      'train-steps': { type: 'string' },
      'alpha-bar-file': { type: 'string' },
    },
  });

  const backend = buildBackend(values);
  if (values.stdio) {
    serveStreams(backend, process.stdin, process.stdout);
    return;
  }
  const server = await listen(backend, values.host as string, Number(values.port));
  const addr = server.address();
  const where = typeof addr === 'object' && addr ? `${addr.address}:${addr.port}` : String(addr);
  console.error(`bridge-server-ref: ${values.backend} backend listening on ${where}`);
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : err);
  process.exit(1);
});
