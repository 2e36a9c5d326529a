import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { describe, expect, test } from 'vitest';

import {
  decodeTensor,
  encodeTensor,
  FrameDecoder,
  FramingError,
  frameMessage,
  MsgType,
} from '../src/protocol.js';

const fixture = (name: string) =>
  readFileSync(fileURLToPath(new URL(`../../fixtures/bridge/${name}`, import.meta.url)));

/** Small deterministic PRNG so fuzz cases are reproducible. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe('framing', () => {
  test('HELLO golden bytes match the shared fixture byte for byte', () => {
    const golden = Buffer.from([0x53, 0x53, 0x57, 0x50, 0x01, 0x00, 0x0a, 0, 0, 0, 0, 0, 0, 0, 0]);
    expect(frameMessage(MsgType.Hello, Buffer.alloc(0)).equals(golden)).toBe(true);
    expect(fixture('hello_frame.bin').equals(golden)).toBe(true);
  });

  test('denoise request golden re-encodes byte for byte', () => {
    const golden = fixture('denoise_req_1x2x2_t10_c0.bin');
    const decoder = new FrameDecoder();
    const [msg] = decoder.feed(golden);
    expect(msg.msgType).toBe(MsgType.DenoiseReq);
    const { tensor, bytesRead } = decodeTensor(msg.payload);
    expect(tensor.dims).toEqual([1, 2, 2]);
    expect([...tensor.data]).toEqual([0, 0, 0, 0]);
    expect(msg.payload.readUInt32LE(bytesRead)).toBe(10);
    expect(msg.payload.readBigUInt64LE(bytesRead + 4)).toBe(0n);
    const rebuilt = Buffer.concat([
      encodeTensor(tensor),
      Buffer.from([10, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
    ]);
    expect(frameMessage(MsgType.DenoiseReq, rebuilt).equals(golden)).toBe(true);
  });

  test('random frames round-trip through the decoder', () => {
    const rand = mulberry32(1);
    for (let i = 0; i < 200; i++) {
      const msgType = 1 + Math.floor(rand() * 11);
      const payload = Buffer.from(
        Array.from({ length: Math.floor(rand() * 64) }, () => Math.floor(rand() * 256)),
      );
      const [msg] = new FrameDecoder().feed(frameMessage(msgType, payload));
      expect(msg.msgType).toBe(msgType);
      expect(msg.payload.equals(payload)).toBe(true);
    }
  });

  test('frames split across chunks are reassembled', () => {
    const stream = Buffer.concat([
      frameMessage(MsgType.Hello, Buffer.alloc(0)),
      frameMessage(MsgType.Error, Buffer.from('boom')),
    ]);
    const decoder = new FrameDecoder();
    const seen: number[] = [];
    for (let i = 0; i < stream.length; i += 4) {
      for (const msg of decoder.feed(stream.subarray(i, i + 4))) seen.push(msg.msgType);
    }
    expect(seen).toEqual([MsgType.Hello, MsgType.Error]);
    expect(decoder.pending).toBe(0);
  });

  test('bad magic fails at a deterministic offset', () => {
    const stream = Buffer.concat([frameMessage(MsgType.Hello, Buffer.alloc(0)), Buffer.from('GARBAGE_GARBAGE!')]);
    for (let run = 0; run < 3; run++) {
      const decoder = new FrameDecoder();
      let offset = -1;
      try {
        decoder.feed(stream);
      } catch (err) {
        if (err instanceof FramingError) offset = err.offset;
      }
      expect(offset).toBe(15);
    }
  });

  test('fuzzed byte blobs never crash the decoder', () => {
    const rand = mulberry32(7);
    for (let i = 0; i < 2000; i++) {
      const blob = Buffer.from(
        Array.from({ length: Math.floor(rand() * 48) }, () => Math.floor(rand() * 256)),
      );
      try {
        new FrameDecoder().feed(blob);
      } catch (err) {
        expect(err).toBeInstanceOf(FramingError);
      }
    }
  });
});

describe('tensor wire format', () => {
  test('round trip preserves dims and float32 data', () => {
    const rand = mulberry32(3);
    const data = new Float32Array(24);
    for (let i = 0; i < data.length; i++) data[i] = rand() * 4 - 2;
    const { tensor, bytesRead } = decodeTensor(encodeTensor({ dims: [2, 3, 4], data }));
    expect(tensor.dims).toEqual([2, 3, 4]);
    expect(bytesRead).toBe(2 + 12 + 96);
    expect([...tensor.data]).toEqual([...data]);
  });

  test('rank and dtype violations are rejected', () => {
    expect(() => encodeTensor({ dims: [1, 1, 1, 1, 1], data: new Float32Array(1) })).toThrow(/rank/);
    const blob = Buffer.from(encodeTensor({ dims: [2], data: new Float32Array(2) }));
    blob[0] = 3;
    expect(() => decodeTensor(blob)).toThrow(/dtype/);
  });

  test('truncation is detected', () => {
    const blob = encodeTensor({ dims: [4], data: new Float32Array(4) });
    expect(() => decodeTensor(blob.subarray(0, blob.length - 2))).toThrow(/truncated/);
  });
});
