/**
 * Binary interchange formats consumed by the replay engine.
 * All multi-byte fields are little-endian; element data is row-major.
 */

export type Dtype = "u8" | "f32";

export interface DatasetView {
  shape: number[];
  dtype: Dtype;
  labels: Uint32Array;
  /** concatenated sample elements, sampleCount * prod(shape) entries */
  data: Uint8Array | Float32Array;
}

export interface ConvLayerSpec {
  outCh: number;
  inCh: number;
  kh: number;
  kw: number;
  /** 0 = conv pad1 stride1 followed by 2x2 max-pool, 1 = transposed stride2 */
  kind: 0 | 1;
  /** kernel values in (out, in, kh, kw) row-major order */
  kernel: Float32Array;
  bias: Float32Array;
}

export const MAX_ELEMENTS = 65536;

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function writeFtch(ds: DatasetView): Buffer {
  const n = elementCount(ds.shape);
  const count = ds.labels.length;
  if (ds.data.length !== n * count) {
    throw new Error(`data holds ${ds.data.length} elements, expected ${n * count}`);
  }
  if (n > MAX_ELEMENTS) {
    throw new Error(`element count ${n} exceeds the ${MAX_ELEMENTS} limit`);
  }
  const elemSize = ds.dtype === "u8" ? 1 : 4;
  const buf = Buffer.alloc(16 + 4 * ds.shape.length + 4 * count + count * n * elemSize);
  let off = 0;
  off += buf.write("FTCH", off, "ascii");
  off = buf.writeUInt16LE(1, off);
  off = buf.writeUInt8(ds.dtype === "u8" ? 0 : 1, off);
  off = buf.writeUInt8(ds.shape.length, off);
  for (const dim of ds.shape) off = buf.writeUInt32LE(dim, off);
  off = buf.writeBigUInt64LE(BigInt(count), off);
  for (const label of ds.labels) off = buf.writeUInt32LE(label, off);
  if (ds.dtype === "u8") {
    Buffer.from(ds.data as Uint8Array).copy(buf, off);
  } else {
    const f = ds.data as Float32Array;
    for (let i = 0; i < f.length; i++) buf.writeFloatLE(f[i], off + 4 * i);
  }
  return buf;
}

export function readFtch(buf: Buffer): DatasetView {
  if (buf.subarray(0, 4).toString("ascii") !== "FTCH") throw new Error("bad FTCH magic");
  if (buf.readUInt16LE(4) !== 1) throw new Error("unsupported FTCH version");
  const dtype: Dtype = buf.readUInt8(6) === 0 ? "u8" : "f32";
  const rank = buf.readUInt8(7);
  const shape: number[] = [];
  let off = 8;
  for (let i = 0; i < rank; i++) {
    shape.push(buf.readUInt32LE(off));
    off += 4;
  }
  const count = Number(buf.readBigUInt64LE(off));
  off += 8;
  const labels = new Uint32Array(count);
  for (let i = 0; i < count; i++) {
    labels[i] = buf.readUInt32LE(off);
    off += 4;
  }
  const n = elementCount(shape);
  if (dtype === "u8") {
    const data = new Uint8Array(buf.subarray(off, off + n * count));
    if (data.length !== n * count) throw new Error("truncated FTCH payload");
    return { shape, dtype, labels, data };
  }
  const data = new Float32Array(n * count);
  if (off + 4 * data.length > buf.length) throw new Error("truncated FTCH payload");
  for (let i = 0; i < data.length; i++) data[i] = buf.readFloatLE(off + 4 * i);
  return { shape, dtype, labels, data };
}

export function writeFsta(lo: number, hi: number): Buffer {
  const buf = Buffer.alloc(14);
  buf.write("FSTA", 0, "ascii");
  buf.writeUInt16LE(1, 4);
  buf.writeFloatLE(lo, 6);
  buf.writeFloatLE(hi, 10);
  return buf;
}

export function writeFaew(kAe: number, layers: ConvLayerSpec[]): Buffer {
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(9);
  head.write("FAEW", 0, "ascii");
  head.writeUInt16LE(1, 4);
  head.writeUInt16LE(kAe, 6);
  head.writeUInt8(layers.length, 8);
  chunks.push(head);
  for (const layer of layers) {
    const meta = Buffer.alloc(7);
    meta.writeUInt16LE(layer.outCh, 0);
    meta.writeUInt16LE(layer.inCh, 2);
    meta.writeUInt8(layer.kh, 4);
    meta.writeUInt8(layer.kw, 5);
    meta.writeUInt8(layer.kind, 6);
    chunks.push(meta);
    const kernel = Buffer.alloc(4 * layer.kernel.length);
    for (let i = 0; i < layer.kernel.length; i++) kernel.writeFloatLE(layer.kernel[i], 4 * i);
    chunks.push(kernel);
    const bias = Buffer.alloc(4 * layer.bias.length);
    for (let i = 0; i < layer.bias.length; i++) bias.writeFloatLE(layer.bias[i], 4 * i);
    chunks.push(bias);
  }
  return Buffer.concat(chunks);
}

export function readFaew(buf: Buffer): { kAe: number; layers: ConvLayerSpec[] } {
  if (buf.subarray(0, 4).toString("ascii") !== "FAEW") throw new Error("bad FAEW magic");
  if (buf.readUInt16LE(4) !== 1) throw new Error("unsupported FAEW version");
  const kAe = buf.readUInt16LE(6);
  const layerCount = buf.readUInt8(8);
  let off = 9;
  const layers: ConvLayerSpec[] = [];
  for (let i = 0; i < layerCount; i++) {
    const outCh = buf.readUInt16LE(off);
    const inCh = buf.readUInt16LE(off + 2);
    const kh = buf.readUInt8(off + 4);
    const kw = buf.readUInt8(off + 5);
    const kind = buf.readUInt8(off + 6) as 0 | 1;
    off += 7;
    const kernel = new Float32Array(outCh * inCh * kh * kw);
    for (let j = 0; j < kernel.length; j++) kernel[j] = buf.readFloatLE(off + 4 * j);
    off += 4 * kernel.length;
    const bias = new Float32Array(outCh);
    for (let j = 0; j < outCh; j++) bias[j] = buf.readFloatLE(off + 4 * j);
    off += 4 * outCh;
    layers.push({ outCh, inCh, kh, kw, kind, kernel, bias });
  }
  return { kAe, layers };
}

/** global min/max over every element of a feature file */
export function datasetRange(ds: DatasetView): { lo: number; hi: number } {
  if (ds.data.length === 0) throw new Error("empty dataset has no value range");
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < ds.data.length; i++) {
    const v = ds.data[i];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return { lo, hi };
}
