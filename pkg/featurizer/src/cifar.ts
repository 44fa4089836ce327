/**
 * Reader for the CIFAR-10 binary batch layout: records of
 * 1 label byte + 3072 image bytes (3x32x32, channel-major) back to back.
 * Dataset files must already be on disk; nothing is downloaded.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { DatasetView } from "./formats.js";

const RECORD = 1 + 3 * 32 * 32;

export function readCifarBatches(files: string[]): DatasetView {
  const labels: number[] = [];
  const chunks: Uint8Array[] = [];
  for (const file of files) {
    const blob = fs.readFileSync(file);
    if (blob.length % RECORD !== 0) {
      throw new Error(`${file}: length ${blob.length} is not a whole number of records`);
    }
    for (let off = 0; off < blob.length; off += RECORD) {
      labels.push(blob[off]);
      chunks.push(blob.subarray(off + 1, off + RECORD));
    }
  }
  const data = new Uint8Array(chunks.length * (RECORD - 1));
  chunks.forEach((c, i) => data.set(c, i * (RECORD - 1)));
  return {
    shape: [3, 32, 32],
    dtype: "u8",
    labels: Uint32Array.from(labels),
    data,
  };
}

export function cifarTrainFiles(dir: string): string[] {
  return [1, 2, 3, 4, 5].map((i) => path.join(dir, `data_batch_${i}.bin`));
}

export function cifarTestFiles(dir: string): string[] {
  return [path.join(dir, "test_batch.bin")];
}
