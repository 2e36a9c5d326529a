/**
 * Wire protocol framing and tensor serialization.
 *
 * Frame: magic "SSWP" | version u16 LE | msg_type u8 | payload_len u64 LE |
 * payload. Tensors: dtype u8 (0 = float32 LE) | ndim u8 | dims u32 LE each |
 * row-major data. Everything is little-endian on the wire regardless of host.
 */

export const MAGIC = Buffer.from('SSWP', 'ascii');
export const VERSION = 1;
export const HEADER_SIZE = 15;
export const MAX_PAYLOAD = 2 ** 32 - 1;
export const MAX_TENSOR_NDIM = 4;

export enum MsgType {
  DenoiseReq = 1,
  DenoiseResp = 2,
  EncodeReq = 3,
  EncodeResp = 4,
  DecodeReq = 5,
  DecodeResp = 6,
  MetricReq = 7,
  MetricResp = 8,
  Error = 9,
  Hello = 10,
  HelloAck = 11,
}

export interface WireMessage {
  msgType: number;
  payload: Buffer;
}

export class FramingError extends Error {
  constructor(
    readonly offset: number,
    detail: string,
  ) {
    super(`framing error at byte ${offset}: ${detail}`);
  }
}

export class ProtocolError extends Error {}

export function frameMessage(msgType: number, payload: Buffer): Buffer {
  if (payload.length > MAX_PAYLOAD) {
    throw new ProtocolError(`payload of ${payload.length} bytes exceeds ${MAX_PAYLOAD}`);
  }
  const head = Buffer.alloc(HEADER_SIZE);
  MAGIC.copy(head, 0);
  head.writeUInt16LE(VERSION, 4);
  head.writeUInt8(msgType, 6);
  head.writeBigUInt64LE(BigInt(payload.length), 7);
  return Buffer.concat([head, payload]);
}

/** Incremental decoder tracking the absolute stream offset, so malformed
 * streams always fail at the same reportable position. */
export class FrameDecoder {
  private buf: Buffer = Buffer.alloc(0);
  private offset = 0;

  feed(data: Buffer): WireMessage[] {
    this.buf = this.buf.length === 0 ? data : Buffer.concat([this.buf, data]);
    const out: WireMessage[] = [];
    for (;;) {
      if (this.buf.length < HEADER_SIZE) break;
      if (!this.buf.subarray(0, 4).equals(MAGIC)) {
        throw new FramingError(this.offset, `bad magic ${this.buf.subarray(0, 4).toString('hex')}`);
      }
      const version = this.buf.readUInt16LE(4);
      if (version !== VERSION) {
        throw new FramingError(this.offset + 4, `unsupported version ${version}`);
      }
      const msgType = this.buf.readUInt8(6);
      const length = this.buf.readBigUInt64LE(7);
      if (length > BigInt(MAX_PAYLOAD)) {
        throw new FramingError(this.offset + 7, `payload length ${length} exceeds ${MAX_PAYLOAD}`);
      }
      const total = HEADER_SIZE + Number(length);
      if (this.buf.length < total) break;
      out.push({ msgType, payload: this.buf.subarray(HEADER_SIZE, total) });
      this.buf = this.buf.subarray(total);
      this.offset += total;
    }
    return out;
  }

  get pending(): number {
    return this.buf.length;
  }
}

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function encodeTensor(tensor: Tensor): Buffer {
  const { dims, data } = tensor;
  if (dims.length < 1 || dims.length > MAX_TENSOR_NDIM) {
    throw new ProtocolError(`tensor rank ${dims.length} outside 1..${MAX_TENSOR_NDIM}`);
  }
  const count = dims.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new ProtocolError(`dims imply ${count} values, data holds ${data.length}`);
  }
  const head = Buffer.alloc(2 + 4 * dims.length);
  head.writeUInt8(0, 0);
  head.writeUInt8(dims.length, 1);
  dims.forEach((d, i) => head.writeUInt32LE(d, 2 + 4 * i));
  const body = Buffer.alloc(4 * count);
  for (let i = 0; i < count; i++) body.writeFloatLE(data[i], 4 * i);
  return Buffer.concat([head, body]);
}

export function decodeTensor(buf: Buffer, offset = 0): { tensor: Tensor; bytesRead: number } {
  if (buf.length - offset < 2) throw new ProtocolError('tensor header truncated');
  const dtype = buf.readUInt8(offset);
  if (dtype !== 0) throw new ProtocolError(`unsupported tensor dtype ${dtype}`);
  const ndim = buf.readUInt8(offset + 1);
  if (ndim < 1 || ndim > MAX_TENSOR_NDIM) {
    throw new ProtocolError(`tensor rank ${ndim} outside 1..${MAX_TENSOR_NDIM}`);
  }
  let pos = offset + 2;
  if (buf.length - pos < 4 * ndim) throw new ProtocolError('tensor dims truncated');
  const dims: number[] = [];
  let count = 1;
  for (let i = 0; i < ndim; i++) {
    const d = buf.readUInt32LE(pos + 4 * i);
    if (d < 1) throw new ProtocolError('tensor dims must be positive');
    dims.push(d);
    count *= d;
  }
  pos += 4 * ndim;
  if (buf.length - pos < 4 * count) throw new ProtocolError('tensor data truncated');
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = buf.readFloatLE(pos + 4 * i);
  return { tensor: { dims, data }, bytesRead: pos + 4 * count - offset };
}
