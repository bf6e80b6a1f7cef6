/**
 * Minimal safetensors reader: enough to pull float32 tensors out of a
 * single-file checkpoint. Layout is an 8-byte little-endian header length,
 * a JSON header mapping tensor names to dtype/shape/data_offsets, then the
 * raw data section.
 */

export interface TensorRecord {
  name: string;
  dtype: string;
  shape: number[];
  /** byte range within the data section */
  dataOffsets: [number, number];
}

export interface SafetensorsFile {
  tensors: Map<string, TensorRecord>;
  metadata: Record<string, string>;
  /** start of the data section within the file buffer */
  dataStart: number;
  buffer: Buffer;
}

export function parseSafetensors(buffer: Buffer): SafetensorsFile {
  if (buffer.length < 8) {
    throw new Error('safetensors: file shorter than its 8-byte header length');
  }
  const headerLen = Number(buffer.readBigUInt64LE(0));
  const dataStart = 8 + headerLen;
  if (dataStart > buffer.length) {
    throw new Error(
      `safetensors: header claims ${headerLen} bytes but only ` +
      `${buffer.length - 8} are present`
    );
  }

  let header: Record<string, unknown>;
  try {
    header = JSON.parse(buffer.subarray(8, dataStart).toString('utf-8'));
  } catch {
    throw new Error('safetensors: header is not valid JSON');
  }

  const tensors = new Map<string, TensorRecord>();
  let metadata: Record<string, string> = {};
  for (const [name, entry] of Object.entries(header)) {
    if (name === '__metadata__') {
      metadata = entry as Record<string, string>;
      continue;
    }
    const rec = entry as { dtype: string; shape: number[]; data_offsets: [number, number] };
    if (!rec.dtype || !Array.isArray(rec.shape) || !Array.isArray(rec.data_offsets)) {
      throw new Error(`safetensors: malformed entry for tensor "${name}"`);
    }
    const [begin, end] = rec.data_offsets;
    if (begin < 0 || end < begin || dataStart + end > buffer.length) {
      throw new Error(`safetensors: data range of tensor "${name}" lies outside the file`);
    }
    tensors.set(name, { name, dtype: rec.dtype, shape: rec.shape, dataOffsets: [begin, end] });
  }

  return { tensors, metadata, dataStart, buffer };
}

/** Copy one F32 tensor out of the file (copying sidesteps alignment issues). */
export function readFloat32(file: SafetensorsFile, name: string): Float32Array {
  const rec = file.tensors.get(name);
  if (!rec) {
    throw new Error(`safetensors: tensor "${name}" not present`);
  }
  if (rec.dtype !== 'F32') {
    throw new Error(`safetensors: tensor "${name}" has dtype ${rec.dtype}, expected F32`);
  }
  const count = rec.shape.reduce((a, b) => a * b, 1);
  const [begin, end] = rec.dataOffsets;
  if (end - begin !== count * 4) {
    throw new Error(
      `safetensors: tensor "${name}" holds ${end - begin} bytes, ` +
      `expected ${count * 4} for shape [${rec.shape.join(', ')}]`
    );
  }
  const out = new Float32Array(count);
  const bytes = file.buffer.subarray(file.dataStart + begin, file.dataStart + end);
  new Uint8Array(out.buffer).set(bytes);
  return out;
}

/** Serialize name->tensor pairs into a single-file safetensors buffer. */
export function writeSafetensors(
  entries: Array<{ name: string; shape: number[]; data: Float32Array }>,
  metadata?: Record<string, string>
): Buffer {
  const header: Record<string, unknown> = {};
  if (metadata) {
    header['__metadata__'] = metadata;
  }
  let offset = 0;
  for (const e of entries) {
    const bytes = e.data.length * 4;
    header[e.name] = { dtype: 'F32', shape: e.shape, data_offsets: [offset, offset + bytes] };
    offset += bytes;
  }
  const headerBuf = Buffer.from(JSON.stringify(header), 'utf-8');
  const lenBuf = Buffer.alloc(8);
  lenBuf.writeBigUInt64LE(BigInt(headerBuf.length), 0);
  const parts: Buffer[] = [lenBuf, headerBuf];
  for (const e of entries) {
    parts.push(Buffer.from(e.data.buffer, e.data.byteOffset, e.data.length * 4));
  }
  return Buffer.concat(parts);
}
