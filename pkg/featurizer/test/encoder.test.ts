import { describe, expect, it } from "vitest";
import { buildEncoder, extractFeatures, parseWeightSpec } from "../src/encoder.js";
import { DatasetView } from "../src/formats.js";
import { mulberry32 } from "../src/rng.js";

function fakeImages(count: number, seed = 0): DatasetView {
  const rand = mulberry32(seed);
  return {
    shape: [3, 32, 32],
    dtype: "u8",
    labels: Uint32Array.from({ length: count }, (_, i) => i % 4),
    data: Uint8Array.from({ length: count * 3 * 32 * 32 }, () => Math.floor(rand() * 256)),
  };
}

describe("feature extractor", () => {
  it("yields the documented split-point shapes on 32x32 inputs", () => {
    const images = fakeImages(3);
    const expected: Record<string, number[]> = {
      conv2: [64, 8, 8],
      conv3: [128, 4, 4],
      conv4: [256, 2, 2],
    };
    for (const split of ["conv2", "conv3", "conv4"] as const) {
      const enc = buildEncoder("resnet18", split, 0);
      const out = extractFeatures(enc, images);
      expect(out.shape).toEqual(expected[split]);
      expect(out.dtype).toBe("f32");
      expect(out.labels).toEqual(images.labels);
      expect(Array.from(out.data).every(Number.isFinite)).toBe(true);
    }
  });

  it("passes raw images through for split none", () => {
    const images = fakeImages(2);
    const out = extractFeatures(buildEncoder("resnet18", "none", 0), images);
    expect(out).toBe(images);
  });

  it("is deterministic per weight seed", () => {
    const images = fakeImages(2, 5);
    const a = extractFeatures(buildEncoder("resnet18", "conv3", 9), images);
    const b = extractFeatures(buildEncoder("resnet18", "conv3", 9), images);
    const c = extractFeatures(buildEncoder("resnet18", "conv3", 10), images);
    expect(Array.from(a.data)).toEqual(Array.from(b.data));
    expect(Array.from(a.data)).not.toEqual(Array.from(c.data));
  });

  it("resnet34 runs the deeper stage layout", () => {
    const enc = buildEncoder("resnet34", "conv3", 0);
    expect(enc.stages[0].length).toBe(3);
    expect(enc.stages[1].length).toBe(4);
    const out = extractFeatures(enc, fakeImages(1));
    expect(out.shape).toEqual([128, 4, 4]);
  });

  it("rejects pretrained weight requests offline", () => {
    expect(() => parseWeightSpec("imagenet1k")).toThrow(/unavailable/);
    expect(parseWeightSpec("random:7")).toBe(7);
  });
});
