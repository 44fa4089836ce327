import { describe, expect, it } from "vitest";
import {
  DatasetView,
  datasetRange,
  readFaew,
  readFtch,
  writeFaew,
  writeFsta,
  writeFtch,
} from "../src/formats.js";

function sampleDataset(): DatasetView {
  return {
    shape: [2, 2],
    dtype: "f32",
    labels: Uint32Array.from([3, 0]),
    data: Float32Array.from([0.5, -1, 2, 3, 9, 8, 7, 6]),
  };
}

describe("FTCH", () => {
  it("round-trips bit-exactly", () => {
    const ds = sampleDataset();
    const back = readFtch(writeFtch(ds));
    expect(back.shape).toEqual(ds.shape);
    expect(back.dtype).toBe(ds.dtype);
    expect(Array.from(back.labels)).toEqual(Array.from(ds.labels));
    expect(Array.from(back.data)).toEqual(Array.from(ds.data));
  });

  it("writes the exact header for an empty dataset", () => {
    const blob = writeFtch({
      shape: [4], dtype: "f32", labels: new Uint32Array(0), data: new Float32Array(0),
    });
    expect(blob.length).toBe(20);
    expect(blob.subarray(0, 4).toString("ascii")).toBe("FTCH");
    expect(blob.readUInt16LE(4)).toBe(1);
    expect(blob.readUInt8(6)).toBe(1); // f32
    expect(blob.readUInt8(7)).toBe(1); // rank
    expect(blob.readUInt32LE(8)).toBe(4);
  });

  it("writes u8 payloads verbatim", () => {
    const blob = writeFtch({
      shape: [2], dtype: "u8", labels: Uint32Array.from([3]),
      data: Uint8Array.from([7, 9]),
    });
    expect(Array.from(blob.subarray(20))).toEqual([3, 0, 0, 0, 7, 9]);
  });

  it("rejects oversized tensors", () => {
    expect(() =>
      writeFtch({
        shape: [257, 257], dtype: "u8",
        labels: Uint32Array.from([0]), data: new Uint8Array(257 * 257),
      }),
    ).toThrow(/65536/);
  });

  it("rejects bad magic", () => {
    const blob = writeFtch(sampleDataset());
    blob.write("XTCH", 0, "ascii");
    expect(() => readFtch(blob)).toThrow(/magic/);
  });
});

describe("FSTA", () => {
  it("is exactly 14 bytes with the declared range", () => {
    const blob = writeFsta(-2.5, 7.0);
    expect(blob.length).toBe(14);
    expect(blob.subarray(0, 4).toString("ascii")).toBe("FSTA");
    expect(blob.readFloatLE(6)).toBe(-2.5);
    expect(blob.readFloatLE(10)).toBe(7.0);
  });
});

describe("FAEW", () => {
  it("round-trips layer metadata and values", () => {
    const layer = (outCh: number, inCh: number, k: number, kind: 0 | 1) => ({
      outCh, inCh, kh: k, kw: k, kind,
      kernel: Float32Array.from(
        { length: outCh * inCh * k * k }, (_, i) => Math.sin(i + outCh),
      ),
      bias: Float32Array.from({ length: outCh }, (_, i) => i * 0.25),
    });
    const layers = [layer(4, 3, 3, 0), layer(2, 4, 3, 0), layer(4, 2, 2, 1), layer(3, 4, 2, 1)];
    const blob = writeFaew(2, layers as never);
    const back = readFaew(blob);
    expect(back.kAe).toBe(2);
    back.layers.forEach((l, i) => {
      expect(l.outCh).toBe(layers[i].outCh);
      expect(l.kind).toBe(layers[i].kind);
      expect(Array.from(l.kernel)).toEqual(Array.from(layers[i].kernel));
      expect(Array.from(l.bias)).toEqual(Array.from(layers[i].bias));
    });
  });
});

describe("datasetRange", () => {
  it("finds the global extrema", () => {
    expect(datasetRange(sampleDataset())).toEqual({ lo: -1, hi: 9 });
  });

  it("rejects an empty dataset", () => {
    expect(() =>
      datasetRange({
        shape: [2], dtype: "f32", labels: new Uint32Array(0), data: new Float32Array(0),
      }),
    ).toThrow(/empty/);
  });
});
