import { describe, expect, it } from "vitest";
import {
  buildAutoencoder,
  decode,
  encode,
  exportFaew,
  fromNhwc,
  toNhwc,
  trainAutoencoder,
} from "../src/autoencoder.js";
import { DatasetView, readFaew } from "../src/formats.js";
import { mulberry32 } from "../src/rng.js";

function randomFeatures(count: number, shape: number[], seed = 0): DatasetView {
  const n = shape.reduce((a, b) => a * b, 1);
  const rand = mulberry32(seed);
  return {
    shape,
    dtype: "f32",
    labels: Uint32Array.from({ length: count }, (_, i) => i % 3),
    data: Float32Array.from({ length: count * n }, () => rand() * 2 - 1),
  };
}

describe("autoencoder", () => {
  it("maps (C,H,W) to a (kAe,H/4,W/4) bottleneck and back", () => {
    const ds = randomFeatures(2, [3, 8, 8]);
    const vars = buildAutoencoder(3, 4, 8, 0);
    const z = encode(vars, toNhwc(ds));
    expect(z.shape).toEqual([2, 2, 2, 4]);
    const out = decode(vars, z);
    expect(out.shape).toEqual([2, 8, 8, 3]);
  });

  it("reduces reconstruction error over training", () => {
    // learnable structure (and non-negative, matching the ReLU output range):
    // each sample is a per-channel constant plus small noise
    const rand = mulberry32(1);
    const shape = [2, 8, 8];
    const n = 2 * 8 * 8;
    const count = 48;
    const data = new Float32Array(count * n);
    for (let s = 0; s < count; s++) {
      for (let c = 0; c < 2; c++) {
        const level = 0.2 + 0.6 * rand();
        for (let i = 0; i < 64; i++) {
          data[s * n + c * 64 + i] = level + 0.05 * rand();
        }
      }
    }
    const ds: DatasetView = {
      shape, dtype: "f32",
      labels: Uint32Array.from({ length: count }, (_, i) => i % 3),
      data,
    };
    const vars = buildAutoencoder(2, 4, 8, 0);
    const losses = trainAutoencoder(vars, ds, { epochs: 6, seed: 0, learningRate: 3e-3 });
    expect(losses[losses.length - 1]).toBeLessThan(losses[0]);
    losses.forEach((l) => expect(Number.isFinite(l)).toBe(true));
  });

  it("exports FAEW whose size lands in the documented envelope", () => {
    // hidden=16 over 3 input channels: the k_ae sweep {4,8,16} stays
    // between 4.6 KiB and 21.62 KiB including the header
    for (const kAe of [4, 8, 16]) {
      const blob = exportFaew(buildAutoencoder(3, kAe, 16, 0));
      expect(blob.length).toBeGreaterThanOrEqual(4.6 * 1024);
      expect(blob.length).toBeLessThanOrEqual(21.62 * 1024);
    }
  });

  it("exports loadable weights without any training", () => {
    const blob = exportFaew(buildAutoencoder(3, 2, 4, 7));
    const back = readFaew(blob);
    expect(back.kAe).toBe(2);
    expect(back.layers.map((l) => l.kind)).toEqual([0, 0, 1, 1]);
    expect(back.layers[1].outCh).toBe(2);
  });

  it("is deterministic for a fixed seed", () => {
    const ds = randomFeatures(16, [2, 8, 8], 2);
    const run = () => {
      const vars = buildAutoencoder(2, 3, 6, 11);
      trainAutoencoder(vars, ds, { epochs: 2, seed: 3 });
      return exportFaew(vars);
    };
    expect(run().equals(run())).toBe(true);
  });

  it("round-trips CHW <-> NHWC", () => {
    const ds = randomFeatures(3, [2, 4, 8], 4);
    const { shape, data } = fromNhwc(toNhwc(ds));
    expect(shape).toEqual([2, 4, 8]);
    expect(Array.from(data)).toEqual(Array.from(ds.data));
  });
});
