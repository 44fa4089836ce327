#!/usr/bin/env node
/**
 * Offline producer for the replay engine: feature extraction (FTCH),
 * range statistics (FSTA), autoencoder training (FAEW), and encoder
 * probe outputs for cross-implementation checks.
 */

import * as fs from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import {
  datasetRange,
  readFtch,
  writeFsta,
  writeFtch,
} from "./formats.js";
import {
  buildAutoencoder,
  encode,
  exportFaew,
  fromNhwc,
  toNhwc,
  trainAutoencoder,
} from "./autoencoder.js";
import {
  Backbone,
  SplitPoint,
  buildEncoder,
  extractFeatures,
  parseWeightSpec,
} from "./encoder.js";
import { cifarTestFiles, cifarTrainFiles, readCifarBatches } from "./cifar.js";

function loadImages(input: string, split: string): ReturnType<typeof readFtch> {
  if (fs.statSync(input).isDirectory()) {
    const files = split === "test" ? cifarTestFiles(input) : cifarTrainFiles(input);
    return readCifarBatches(files);
  }
  return readFtch(fs.readFileSync(input));
}

await yargs(hideBin(process.argv))
  .command(
    "extract",
    "encode an image dataset at a split point and write FTCH features",
    (y) =>
      y
        .option("input", { type: "string", demandOption: true,
                           describe: "FTCH image file or CIFAR-10 binary dir" })
        .option("cifar-split", { type: "string", default: "train",
                                 choices: ["train", "test"] })
        .option("backbone", { type: "string", default: "resnet18",
                              choices: ["resnet18", "resnet34"] })
        .option("split", { type: "string", default: "conv4",
                           choices: ["none", "conv2", "conv3", "conv4"] })
        .option("weights", { type: "string", default: "random:0",
                             describe: "random:<seed> (pretrained sources need a network)" })
        .option("out", { type: "string", demandOption: true }),
    (argv) => {
      const images = loadImages(argv.input, argv["cifar-split"]);
      const seed = parseWeightSpec(argv.weights);
      const enc = buildEncoder(argv.backbone as Backbone, argv.split as SplitPoint, seed);
      const features = extractFeatures(enc, images);
      fs.writeFileSync(argv.out, writeFtch(features));
      console.log(
        `wrote ${argv.out}: shape=(${features.shape}) dtype=${features.dtype} ` +
        `samples=${features.labels.length}`,
      );
    },
  )
  .command(
    "stats",
    "write the global value range of a feature file as FSTA",
    (y) =>
      y
        .option("input", { type: "string", demandOption: true })
        .option("out", { type: "string", demandOption: true }),
    (argv) => {
      const ds = readFtch(fs.readFileSync(argv.input));
      const { lo, hi } = datasetRange(ds);
      fs.writeFileSync(argv.out, writeFsta(lo, hi));
      const note = lo === hi ? " (degenerate: constant data)" : "";
      console.log(`wrote ${argv.out}: lo=${lo} hi=${hi}${note}`);
    },
  )
  .command(
    "train-ae",
    "train the exemplar autoencoder on a feature/image file and export FAEW",
    (y) =>
      y
        .option("input", { type: "string", demandOption: true })
        .option("k-ae", { type: "number", demandOption: true })
        .option("hidden", { type: "number", default: 16 })
        .option("epochs", { type: "number", default: 10 })
        .option("batch-size", { type: "number", default: 32 })
        .option("lr", { type: "number", default: 1e-3 })
        .option("seed", { type: "number", default: 0 })
        .option("out", { type: "string", demandOption: true }),
    (argv) => {
      const ds = readFtch(fs.readFileSync(argv.input));
      if (ds.shape.length !== 3 || ds.shape[1] % 4 || ds.shape[2] % 4
          || ds.shape[1] < 4 || ds.shape[2] < 4) {
        throw new Error(
          `autoencoder needs (C,H,W) with H,W >= 4 and divisible by 4, got (${ds.shape})`,
        );
      }
      // u8 inputs train on the raw 0..255 scale: the engine feeds the codec
      // unscaled casts, and both sides must compute the same function
      const vars = buildAutoencoder(ds.shape[0], argv["k-ae"], argv.hidden, argv.seed);
      const losses = trainAutoencoder(vars, ds, {
        epochs: argv.epochs,
        batchSize: argv["batch-size"],
        learningRate: argv.lr,
        seed: argv.seed,
        onEpoch: (e, loss) => console.log(`epoch ${e}: mse ${loss.toExponential(3)}`),
      });
      const blob = exportFaew(vars);
      fs.writeFileSync(argv.out, blob);
      console.log(
        `wrote ${argv.out}: k_ae=${argv["k-ae"]} s_ae=${blob.length} bytes` +
        (losses.length ? ` final mse=${losses[losses.length - 1].toExponential(3)}` : ""),
      );
    },
  )
  .command(
    "probe",
    "run the trained encoder half over probe inputs and write the latents as FTCH",
    (y) =>
      y
        .option("weights", { type: "string", demandOption: true,
                             describe: "FAEW file produced by train-ae" })
        .option("input", { type: "string", demandOption: true })
        .option("out", { type: "string", demandOption: true }),
    async (argv) => {
      const { readFaew } = await import("./formats.js");
      const { kAe, layers } = readFaew(fs.readFileSync(argv.weights));
      const ds = readFtch(fs.readFileSync(argv.input));
      // rebuild tfjs variables from the serialized layout
      const tf = await import("@tensorflow/tfjs");
      const [enc1, enc2, dec1, dec2] = layers;
      const toConv = (l: typeof enc1) => {
        // FAEW (out,in,kh,kw) -> tfjs conv2d [kh,kw,in,out]
        const t = new Float32Array(l.kernel.length);
        for (let o = 0; o < l.outCh; o++)
          for (let i = 0; i < l.inCh; i++)
            for (let y = 0; y < l.kh; y++)
              for (let x = 0; x < l.kw; x++)
                t[((y * l.kw + x) * l.inCh + i) * l.outCh + o] =
                  l.kernel[((o * l.inCh + i) * l.kh + y) * l.kw + x];
        return tf.tensor4d(t, [l.kh, l.kw, l.inCh, l.outCh]);
      };
      const vars = {
        enc1K: tf.variable(toConv(enc1)),
        enc1B: tf.variable(tf.tensor1d(enc1.bias)),
        enc2K: tf.variable(toConv(enc2)),
        enc2B: tf.variable(tf.tensor1d(enc2.bias)),
        dec1K: tf.variable(tf.zeros([2, 2, dec1.outCh, dec1.inCh])),
        dec1B: tf.variable(tf.tensor1d(dec1.bias)),
        dec2K: tf.variable(tf.zeros([2, 2, dec2.outCh, dec2.inCh])),
        dec2B: tf.variable(tf.tensor1d(dec2.bias)),
        channels: enc1.inCh,
        hidden: enc1.outCh,
        kAe,
      };
      const z = encode(vars, toNhwc(ds));
      const { shape, data } = fromNhwc(z);
      fs.writeFileSync(argv.out, writeFtch({
        shape, dtype: "f32", labels: ds.labels, data,
      }));
      console.log(`wrote ${argv.out}: latent shape=(${shape})`);
    },
  )
  .demandCommand(1)
  .strict()
  .parse();
