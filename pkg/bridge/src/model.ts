/**
 * Models the adapter can serve.
 *
 * The built-in mirror model buckets the global mean sample value by a
 * strictly increasing threshold list, deciding `t <= mean` in exact integer
 * arithmetic (t * samples <= total) so its labels reproduce the parent
 * library's built-in classifier bit for bit.
 *
 * A user hook is any ES module whose default export provides `classes` and
 * `classify(image)`; see test/hook_fixture.mjs for the shape. Real vision
 * models plug in there (load weights at import time, run inference inside
 * classify); the adapter stays model-agnostic.
 */

import { pathToFileURL } from "node:url";
import type { RawImage } from "./protocol.js";

export interface Model {
  readonly classes: number;
  classify(image: RawImage): number | Promise<number>;
}

export function mirrorMeanThreshold(thresholds: number[]): Model {
  if (thresholds.length === 0) {
    throw new Error("at least one threshold required");
  }
  for (let i = 1; i < thresholds.length; i++) {
    if (thresholds[i] <= thresholds[i - 1]) {
      throw new Error(`thresholds not strictly increasing: ${thresholds.join(",")}`);
    }
  }
  return {
    classes: thresholds.length + 1,
    classify(image: RawImage): number {
      let total = 0;
      for (const byte of image.pixels) {
        total += byte;
      }
      const count = image.pixels.length;
      let label = 0;
      for (const t of thresholds) {
        if (t * count <= total) {
          label += 1;
        }
      }
      return label;
    },
  };
}

export async function loadHook(modulePath: string): Promise<Model> {
  const loaded = await import(pathToFileURL(modulePath).href);
  const model = loaded.default as Partial<Model> | undefined;
  if (
    !model ||
    typeof model.classes !== "number" ||
    !Number.isInteger(model.classes) ||
    typeof model.classify !== "function"
  ) {
    throw new Error(
      `hook ${modulePath} must default-export { classes: int, classify(image) }`,
    );
  }
  if (model.classes < 2) {
    throw new Error(`hook declares ${model.classes} classes, need at least 2`);
  }
  return model as Model;
}
