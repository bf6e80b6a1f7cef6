/**
 * NMRF v1 binary writer. The format the engine loads:
 *
 *   "NMRF"  u32 version=1  u32 layerCount
 *   per layer:
 *     u32 nameLength, UTF-8 name
 *     u32 outChannels, u32 inChannels, u32 kernelH, u32 kernelW
 *     float32[out*in*kh*kw] weights, out-major
 *     float32[out] biases
 *
 * Every integer and float is little-endian. No padding, no trailing bytes.
 */
import { createHash } from 'node:crypto';

export interface LayerTensors {
  name: string;
  outChannels: number;
  inChannels: number;
  kernelH: number;
  kernelW: number;
  weights: Float32Array;
  biases: Float32Array;
}

const MAGIC = Buffer.from('NMRF', 'ascii');
const VERSION = 1;

function u32(value: number): Buffer {
  const b = Buffer.alloc(4);
  b.writeUInt32LE(value >>> 0, 0);
  return b;
}

const HOST_IS_LE = new Uint8Array(new Uint32Array([1]).buffer)[0] === 1;

function f32Bytes(data: Float32Array): Buffer {
  if (HOST_IS_LE) {
    // the typed array's bytes are already little-endian; copy them out so
    // later mutation of the input can't corrupt the serialized output
    return Buffer.from(
      new Uint8Array(data.buffer, data.byteOffset, data.length * 4)
    );
  }
  const b = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) {
    b.writeFloatLE(data[i], i * 4);
  }
  return b;
}

export function serializeLayers(layers: LayerTensors[]): Buffer {
  const parts: Buffer[] = [MAGIC, u32(VERSION), u32(layers.length)];
  for (const layer of layers) {
    const { name, outChannels, inChannels, kernelH, kernelW, weights, biases } = layer;
    const expected = outChannels * inChannels * kernelH * kernelW;
    if (weights.length !== expected) {
      throw new Error(
        `layer ${name}: ${weights.length} weights, expected ${expected} for ` +
        `${outChannels}x${inChannels}x${kernelH}x${kernelW}`
      );
    }
    if (biases.length !== outChannels) {
      throw new Error(`layer ${name}: ${biases.length} biases, expected ${outChannels}`);
    }
    const nameBuf = Buffer.from(name, 'utf-8');
    parts.push(
      u32(nameBuf.length),
      nameBuf,
      u32(outChannels),
      u32(inChannels),
      u32(kernelH),
      u32(kernelW),
      f32Bytes(weights),
      f32Bytes(biases)
    );
  }
  return Buffer.concat(parts);
}

export function sha256Hex(buffer: Buffer): string {
  return createHash('sha256').update(buffer).digest('hex');
}
