/**
 * Convolutional autoencoder for stored exemplars: two conv3x3+ReLU+maxpool2
 * blocks down to a kAe-channel bottleneck, decoded by two transposed-conv2x2
 * stride-2 + ReLU blocks. Trained on reconstruction MSE and exported in the
 * engine's FAEW layout.
 */

import * as tf from "@tensorflow/tfjs";
import { ConvLayerSpec, DatasetView, elementCount, writeFaew } from "./formats.js";
import { mulberry32, shuffled } from "./rng.js";

export interface AeVariables {
  enc1K: tf.Variable;
  enc1B: tf.Variable;
  enc2K: tf.Variable;
  enc2B: tf.Variable;
  dec1K: tf.Variable;
  dec1B: tf.Variable;
  dec2K: tf.Variable;
  dec2B: tf.Variable;
  channels: number;
  hidden: number;
  kAe: number;
}

function uniformVar(shape: number[], fanIn: number, seed: number): tf.Variable {
  const bound = 1 / Math.sqrt(fanIn);
  return tf.variable(tf.randomUniform(shape, -bound, bound, "float32", seed));
}

export function buildAutoencoder(
  channels: number,
  kAe: number,
  hidden = 16,
  seed = 0,
): AeVariables {
  return {
    enc1K: uniformVar([3, 3, channels, hidden], 9 * channels, seed + 1),
    enc1B: tf.variable(tf.zeros([hidden])),
    enc2K: uniformVar([3, 3, hidden, kAe], 9 * hidden, seed + 2),
    enc2B: tf.variable(tf.zeros([kAe])),
    dec1K: uniformVar([2, 2, hidden, kAe], 4 * kAe, seed + 3),
    dec1B: tf.variable(tf.zeros([hidden])),
    dec2K: uniformVar([2, 2, channels, hidden], 4 * hidden, seed + 4),
    dec2B: tf.variable(tf.zeros([channels])),
    channels,
    hidden,
    kAe,
  };
}

/** x is NHWC float32 */
export function encode(vars: AeVariables, x: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    const c1 = tf.conv2d(x, vars.enc1K as tf.Tensor4D, 1, "same");
    const h1 = tf.maxPool(tf.relu(tf.add(c1, vars.enc1B)) as tf.Tensor4D, 2, 2, "valid");
    const c2 = tf.conv2d(h1, vars.enc2K as tf.Tensor4D, 1, "same");
    return tf.maxPool(tf.relu(tf.add(c2, vars.enc2B)) as tf.Tensor4D, 2, 2, "valid");
  });
}

export function decode(vars: AeVariables, z: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    const [b, h, w] = [z.shape[0], z.shape[1], z.shape[2]];
    const t1 = tf.conv2dTranspose(
      z, vars.dec1K as tf.Tensor4D, [b, 2 * h, 2 * w, vars.hidden], 2, "valid",
    );
    const d1 = tf.relu(tf.add(t1, vars.dec1B)) as tf.Tensor4D;
    const t2 = tf.conv2dTranspose(
      d1, vars.dec2K as tf.Tensor4D, [b, 4 * h, 4 * w, vars.channels], 2, "valid",
    );
    return tf.relu(tf.add(t2, vars.dec2B)) as tf.Tensor4D;
  });
}

/** FTCH samples are (C,H,W) row-major; tfjs wants NHWC */
export function toNhwc(ds: DatasetView, indices?: number[]): tf.Tensor4D {
  const [c, h, w] = ds.shape;
  const n = elementCount(ds.shape);
  const take = indices ?? Array.from({ length: ds.labels.length }, (_, i) => i);
  const out = new Float32Array(take.length * n);
  for (let s = 0; s < take.length; s++) {
    const base = take[s] * n;
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        for (let ch = 0; ch < c; ch++) {
          out[s * n + (y * w + x) * c + ch] = ds.data[base + ch * h * w + y * w + x];
        }
      }
    }
  }
  return tf.tensor4d(out, [take.length, h, w, c]);
}

/** NHWC activations back to concatenated (C,H,W) row-major rows */
export function fromNhwc(t: tf.Tensor4D): { shape: number[]; data: Float32Array } {
  const [count, h, w, c] = t.shape;
  const src = t.dataSync() as Float32Array;
  const n = c * h * w;
  const out = new Float32Array(count * n);
  for (let s = 0; s < count; s++) {
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        for (let ch = 0; ch < c; ch++) {
          out[s * n + ch * h * w + y * w + x] = src[s * n + (y * w + x) * c + ch];
        }
      }
    }
  }
  return { shape: [c, h, w], data: out };
}

export interface TrainOptions {
  epochs: number;
  batchSize?: number;
  learningRate?: number;
  seed?: number;
  onEpoch?: (epoch: number, loss: number) => void;
}

export function trainAutoencoder(
  vars: AeVariables,
  ds: DatasetView,
  opts: TrainOptions,
): number[] {
  const batchSize = opts.batchSize ?? 32;
  const optimizer = tf.train.adam(opts.learningRate ?? 1e-3);
  const rand = mulberry32(opts.seed ?? 0);
  const count = ds.labels.length;
  const losses: number[] = [];
  const trainable = [
    vars.enc1K, vars.enc1B, vars.enc2K, vars.enc2B,
    vars.dec1K, vars.dec1B, vars.dec2K, vars.dec2B,
  ];
  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    const order = shuffled(count, rand);
    let epochLoss = 0;
    let batches = 0;
    for (let start = 0; start < count; start += batchSize) {
      const take = order.slice(start, start + batchSize);
      const x = toNhwc(ds, take);
      const cost = optimizer.minimize(
        () => tf.losses.meanSquaredError(x, decode(vars, encode(vars, x))) as tf.Scalar,
        true,
        trainable,
      );
      epochLoss += cost!.dataSync()[0];
      cost!.dispose();
      x.dispose();
      batches += 1;
    }
    const mean = epochLoss / Math.max(batches, 1);
    losses.push(mean);
    opts.onEpoch?.(epoch, mean);
  }
  optimizer.dispose();
  return losses;
}

/** permute a tfjs [kh,kw,a,b] kernel into engine (out,in,kh,kw) order */
function permuteKernel(
  values: Float32Array,
  kh: number,
  kw: number,
  a: number,
  b: number,
  outIsLast: boolean,
): Float32Array {
  // conv2d filters are [kh,kw,in,out]; conv2dTranspose filters are [kh,kw,out,in]
  const outCh = outIsLast ? b : a;
  const inCh = outIsLast ? a : b;
  const res = new Float32Array(outCh * inCh * kh * kw);
  for (let y = 0; y < kh; y++) {
    for (let x = 0; x < kw; x++) {
      for (let i = 0; i < a; i++) {
        for (let j = 0; j < b; j++) {
          const src = ((y * kw + x) * a + i) * b + j;
          const o = outIsLast ? j : i;
          const inp = outIsLast ? i : j;
          res[((o * inCh + inp) * kh + y) * kw + x] = values[src];
        }
      }
    }
  }
  return res;
}

export function exportFaew(vars: AeVariables): Buffer {
  const layer = (
    kernel: tf.Variable, bias: tf.Variable, kh: number, kind: 0 | 1, outIsLast: boolean,
  ): ConvLayerSpec => {
    const [a, b] = [kernel.shape[2]!, kernel.shape[3]!];
    return {
      outCh: outIsLast ? b : a,
      inCh: outIsLast ? a : b,
      kh,
      kw: kh,
      kind,
      kernel: permuteKernel(kernel.dataSync() as Float32Array, kh, kh, a, b, outIsLast),
      bias: bias.dataSync() as Float32Array,
    };
  };
  return writeFaew(vars.kAe, [
    layer(vars.enc1K, vars.enc1B, 3, 0, true),
    layer(vars.enc2K, vars.enc2B, 3, 0, true),
    layer(vars.dec1K, vars.dec1B, 2, 1, false),
    layer(vars.dec2K, vars.dec2B, 2, 1, false),
  ]);
}
