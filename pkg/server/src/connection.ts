/**
 * Per-connection protocol state machine, transport-agnostic.
 *
 * One request in flight at a time (the client is serial). Well-framed but
 * unserviceable requests get an ERROR response and the connection stays up;
 * framing violations get an ERROR and the connection is closed, since byte
 * positions can no longer be trusted.
 */

import {
  decodeTensor,
  encodeTensor,
  frameMessage,
  FrameDecoder,
  FramingError,
  MsgType,
  ProtocolError,
  type Tensor,
  type WireMessage,
} from './protocol.js';
import type { Backend } from './backends.js';

export interface Transport {
  send(data: Buffer): void;
  close(): void;
}

export class Connection {
  private readonly decoder = new FrameDecoder();
  private greeted = false;

  constructor(
    private readonly backend: Backend,
    private readonly transport: Transport,
  ) {}

  onData(data: Buffer): void {
    let messages: WireMessage[];
    try {
      messages = this.decoder.feed(data);
    } catch (err) {
      if (err instanceof FramingError) {
        this.transport.send(frameMessage(MsgType.Error, Buffer.from(err.message, 'utf-8')));
        this.transport.close();
        return;
      }
      throw err;
    }
    for (const msg of messages) {
      this.transport.send(this.respond(msg));
    }
  }

  private respond(msg: WireMessage): Buffer {
    try {
      return this.dispatch(msg);
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      return frameMessage(MsgType.Error, Buffer.from(reason, 'utf-8'));
    }
  }

  private dispatch(msg: WireMessage): Buffer {
    switch (msg.msgType) {
      case MsgType.Hello: {
        this.greeted = true;
        const blob = JSON.stringify({
          caps: this.backend.caps,
          latent_channels: this.backend.latentChannels,
          scale: this.backend.scale,
        });
        return frameMessage(MsgType.HelloAck, Buffer.from(blob, 'utf-8'));
      }
      case MsgType.DenoiseReq:
        return this.handleDenoise(msg.payload);
      case MsgType.EncodeReq:
        return this.handleCodec(msg.payload, this.backend.encodeImage, MsgType.EncodeResp, 'encode');
      case MsgType.DecodeReq:
        return this.handleCodec(msg.payload, this.backend.decodeLatent, MsgType.DecodeResp, 'decode');
      case MsgType.MetricReq:
        return this.handleMetric(msg.payload);
      default:
        throw new ProtocolError(`unsupported message type ${msg.msgType}`);
    }
  }

  private requireGreeting(): void {
    if (!this.greeted) throw new ProtocolError('HELLO must complete before requests');
  }

  private handleDenoise(payload: Buffer): Buffer {
    this.requireGreeting();
    if (!this.backend.denoise) throw new ProtocolError('backend has no denoise capability');
    const { tensor, bytesRead } = decodeTensor(payload);
    if (payload.length !== bytesRead + 12) {
      throw new ProtocolError('denoise request must end with u32 timestep and u64 cond token');
    }
    const t = payload.readUInt32LE(bytesRead);
    const cond = payload.readBigUInt64LE(bytesRead + 4);
    const out = this.backend.denoise(tensor, t, cond);
    assertSameDims(tensor, out);
    return frameMessage(MsgType.DenoiseResp, encodeTensor(out));
  }

  private handleCodec(
    payload: Buffer,
    handler: ((t: Tensor) => Tensor) | undefined,
    respType: MsgType,
    cap: string,
  ): Buffer {
    this.requireGreeting();
    if (!handler) throw new ProtocolError(`backend has no ${cap} capability`);
    const { tensor, bytesRead } = decodeTensor(payload);
    if (payload.length !== bytesRead) throw new ProtocolError('trailing bytes after tensor');
    return frameMessage(respType, encodeTensor(handler(tensor)));
  }

  private handleMetric(payload: Buffer): Buffer {
    this.requireGreeting();
    if (!this.backend.metric) throw new ProtocolError('backend has no metric capability');
    if (payload.length < 1) throw new ProtocolError('metric request truncated');
    const idLen = payload.readUInt8(0);
    if (payload.length < 1 + idLen) throw new ProtocolError('metric id truncated');
    const id = payload.subarray(1, 1 + idLen).toString('utf-8');
    const a = decodeTensor(payload, 1 + idLen);
    const b = decodeTensor(payload, 1 + idLen + a.bytesRead);
    if (payload.length !== 1 + idLen + a.bytesRead + b.bytesRead) {
      throw new ProtocolError('trailing bytes after metric tensors');
    }
    const value = this.backend.metric(id, a.tensor, b.tensor);
    return frameMessage(MsgType.MetricResp, encodeTensor({ dims: [1], data: new Float32Array([value]) }));
  }
}

function assertSameDims(request: Tensor, response: Tensor): void {
  const same =
    request.dims.length === response.dims.length &&
    request.dims.every((d, i) => d === response.dims[i]);
  if (!same) {
    throw new ProtocolError(
      `backend returned shape [${response.dims}] for request shape [${request.dims}]`,
    );
  }
}
