import { describe, expect, it } from 'vitest';
import { parseSafetensors, readFloat32, writeSafetensors } from '../src/safetensors.js';

function sample(): Buffer {
  return writeSafetensors(
    [
      { name: 'a', shape: [2, 3], data: new Float32Array([1, 2, 3, 4, 5, 6]) },
      { name: 'b', shape: [4], data: new Float32Array([-1, 0.5, 7, 9]) },
    ],
    { purpose: 'test' }
  );
}

describe('parseSafetensors', () => {
  it('round-trips tensors and metadata', () => {
    const file = parseSafetensors(sample());
    expect([...file.tensors.keys()]).toEqual(['a', 'b']);
    expect(file.metadata).toEqual({ purpose: 'test' });
    expect(file.tensors.get('a')!.shape).toEqual([2, 3]);
    expect(Array.from(readFloat32(file, 'a'))).toEqual([1, 2, 3, 4, 5, 6]);
    expect(Array.from(readFloat32(file, 'b'))).toEqual([-1, 0.5, 7, 9]);
  });

  it('rejects files shorter than the length prefix', () => {
    expect(() => parseSafetensors(Buffer.from([1, 2, 3]))).toThrow(/shorter/);
  });

  it('rejects a header length pointing past the end', () => {
    const buf = sample();
    buf.writeBigUInt64LE(BigInt(buf.length * 2), 0);
    expect(() => parseSafetensors(buf)).toThrow(/header claims/);
  });

  it('rejects non-JSON headers', () => {
    const lenBuf = Buffer.alloc(8);
    lenBuf.writeBigUInt64LE(4n, 0);
    const buf = Buffer.concat([lenBuf, Buffer.from('nope')]);
    expect(() => parseSafetensors(buf)).toThrow(/not valid JSON/);
  });

  it('rejects tensors whose data lies outside the file', () => {
    const truncated = sample().subarray(0, sample().length - 8);
    expect(() => parseSafetensors(truncated)).toThrow(/outside the file/);
  });
});

describe('readFloat32', () => {
  it('names the missing tensor', () => {
    expect(() => readFloat32(parseSafetensors(sample()), 'zzz')).toThrow(/"zzz"/);
  });

  it('rejects non-F32 dtypes', () => {
    const buf = sample();
    const patched = Buffer.from(
      buf.toString('latin1').replace('"dtype":"F32","shape":[2,3]', '"dtype":"F16","shape":[2,3]'),
      'latin1'
    );
    expect(() => readFloat32(parseSafetensors(patched), 'a')).toThrow(/dtype F16/);
  });

  it('rejects byte counts that disagree with the shape', () => {
    const entries = [{ name: 'a', shape: [5], data: new Float32Array(5) }];
    const buf = writeSafetensors(entries);
    const patched = Buffer.from(
      buf.toString('latin1').replace('"shape":[5]', '"shape":[6]'),
      'latin1'
    );
    expect(() => readFloat32(parseSafetensors(patched), 'a')).toThrow(/expected 24/);
  });
});
