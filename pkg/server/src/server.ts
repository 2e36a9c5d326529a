/** TCP and stdio transports for the reference backend. */

import * as net from 'node:net';

import { Connection } from './connection.js';
import type { Backend } from './backends.js';

export function createTcpServer(backend: Backend): net.Server {
  return net.createServer((socket) => {
    const connection = new Connection(backend, {
      send: (data) => socket.write(data),
      close: () => socket.end(),
    });
    socket.on('data', (data: Buffer) => {
      try {
        connection.onData(data);
      } catch {
        socket.destroy();
      }
    });
    socket.on('error', () => socket.destroy());
  });
}

export function listen(backend: Backend, host: string, port: number): Promise<net.Server> {
  const server = createTcpServer(backend);
  return new Promise((resolve, reject) => {
    server.once('error', reject);
    server.listen(port, host, () => resolve(server));
  });
}

/** Serve a single session over a read/write stream pair (e.g. stdio). */
export function serveStreams(
  backend: Backend,
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
): void {
  const connection = new Connection(backend, {
    send: (data) => output.write(data),
    close: () => {
      if ('end' in output && typeof output.end === 'function') output.end();
    },
  });
  input.on('data', (data: Buffer) => {
    try {
      connection.onData(data);
    } catch {
      if ('end' in output && typeof output.end === 'function') output.end();
    }
  });
}
