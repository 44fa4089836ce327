/**
 * Frozen convolutional feature extractor with configurable split points.
 *
 * Structure follows the standard residual-network layout for 32x32 inputs:
 * 7x7/2 stem + 3x3/2 pool, then three basic-block stages. Splitting after
 * stage 1/2/3 yields (64,8,8), (128,4,4), (256,2,2) feature maps.
 *
 * Pretrained weights cannot be fetched in an offline environment; the
 * extractor therefore runs with seeded random weights ("random:<seed>"),
 * which preserves every shape and interface contract. Requesting
 * "imagenet1k" raises unless a future weight source is wired in.
 */

import * as tf from "@tensorflow/tfjs";
import { DatasetView, elementCount } from "./formats.js";
import { toNhwc, fromNhwc } from "./autoencoder.js";

export type Backbone = "resnet18" | "resnet34";
export type SplitPoint = "none" | "conv2" | "conv3" | "conv4";

const STAGE_BLOCKS: Record<Backbone, number[]> = {
  resnet18: [2, 2, 2],
  resnet34: [3, 4, 6],
};
const STAGE_CHANNELS = [64, 128, 256];

interface BlockWeights {
  conv1: tf.Tensor4D;
  conv2: tf.Tensor4D;
  shortcut?: tf.Tensor4D;
  stride: number;
}

export interface EncoderWeights {
  stem: tf.Tensor4D;
  stages: BlockWeights[][];
  split: SplitPoint;
}

function heKernel(
  shape: [number, number, number, number],
  seed: number,
): tf.Tensor4D {
  const fanIn = shape[0] * shape[1] * shape[2];
  return tf.randomNormal(shape, 0, Math.sqrt(2 / fanIn), "float32", seed);
}

export function parseWeightSpec(spec: string): number {
  if (spec.startsWith("random:")) return Number(spec.slice("random:".length));
  if (spec === "random") return 0;
  throw new Error(
    `pretrained weights '${spec}' are unavailable in this environment; ` +
    "use random:<seed> for the structural stand-in",
  );
}

export function buildEncoder(
  backbone: Backbone,
  split: SplitPoint,
  seed: number,
): EncoderWeights {
  if (split === "none") {
    return { stem: tf.zeros([1, 1, 1, 1]), stages: [], split };
  }
  const stageCount = { conv2: 1, conv3: 2, conv4: 3 }[split];
  let s = seed * 1000 + 1;
  const stem = heKernel([7, 7, 3, 64], s++);
  const stages: BlockWeights[][] = [];
  let inCh = 64;
  for (let stage = 0; stage < stageCount; stage++) {
    const outCh = STAGE_CHANNELS[stage];
    const blocks: BlockWeights[] = [];
    for (let b = 0; b < STAGE_BLOCKS[backbone][stage]; b++) {
      const stride = stage > 0 && b === 0 ? 2 : 1;
      const block: BlockWeights = {
        conv1: heKernel([3, 3, inCh, outCh], s++),
        conv2: heKernel([3, 3, outCh, outCh], s++),
        stride,
      };
      if (stride !== 1 || inCh !== outCh) {
        block.shortcut = heKernel([1, 1, inCh, outCh], s++);
      }
      blocks.push(block);
      inCh = outCh;
    }
    stages.push(blocks);
  }
  return { stem, stages, split };
}

function runBlock(x: tf.Tensor4D, w: BlockWeights): tf.Tensor4D {
  return tf.tidy(() => {
    const main = tf.conv2d(
      tf.relu(tf.conv2d(x, w.conv1, w.stride, "same")) as tf.Tensor4D,
      w.conv2, 1, "same",
    );
    const skip = w.shortcut ? tf.conv2d(x, w.shortcut, w.stride, "same") : x;
    return tf.relu(tf.add(main, skip)) as tf.Tensor4D;
  });
}

/** images NHWC in [0,1]-ish; returns the split-point activation */
export function encodeImages(weights: EncoderWeights, x: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    let h = tf.relu(tf.conv2d(x, weights.stem, 2, "same")) as tf.Tensor4D;
    h = tf.maxPool(h, 3, 2, "same");
    for (const stage of weights.stages) {
      for (const block of stage) h = runBlock(h, block);
    }
    return h;
  });
}

/**
 * Push every sample of a u8 image dataset through the frozen encoder.
 * split "none" passes raw images through untouched.
 */
export function extractFeatures(
  weights: EncoderWeights,
  images: DatasetView,
  batchSize = 64,
): DatasetView {
  if (weights.split === "none") {
    return images;
  }
  if (images.dtype !== "u8" || images.shape.length !== 3) {
    throw new Error("feature extraction expects (C,H,W) u8 images");
  }
  const count = images.labels.length;
  const features: Float32Array[] = [];
  let outShape: number[] = [];
  for (let start = 0; start < count; start += batchSize) {
    const take = Array.from(
      { length: Math.min(batchSize, count - start) },
      (_, i) => start + i,
    );
    const batch = tf.tidy(() => {
      const x = toNhwc(images, take);
      return encodeImages(weights, tf.div(x, 255.0) as tf.Tensor4D);
    });
    const { shape, data } = fromNhwc(batch);
    batch.dispose();
    outShape = shape;
    features.push(data);
  }
  const n = elementCount(outShape);
  if (n > 65536) throw new Error(`encoded feature maps have ${n} elements (> 65536)`);
  const data = new Float32Array(count * n);
  let off = 0;
  for (const chunk of features) {
    data.set(chunk, off);
    off += chunk.length;
  }
  return { shape: outShape, dtype: "f32", labels: images.labels, data };
}
