/**
 * Tiny synthetic test-image generator: bright colored rectangles on a
 * dark textured background, saved as binary PPM. Used by the extractor
 * tests and the smoke corpus; real deployments feed photographs.
 */

import { promises as fs } from "fs";
import * as path from "path";

import { RgbImage, encodePpm } from "./image.js";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function syntheticImage(seed: number, width = 640, height = 480): RgbImage {
  const rand = mulberry32(seed);
  const pixels = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    const v = 0.06 + 0.04 * rand();
    pixels[3 * i] = v;
    pixels[3 * i + 1] = v;
    pixels[3 * i + 2] = v * 1.2;
  }
  const nRects = 2 + Math.floor(rand() * 3);
  for (let r = 0; r < nRects; r++) {
    const w = Math.floor(width * (0.12 + rand() * 0.18));
    const h = Math.floor(height * (0.12 + rand() * 0.18));
    const x0 = Math.floor(rand() * (width - w));
    const y0 = Math.floor(rand() * (height - h));
    const color = [0.3 + 0.7 * rand(), 0.3 + 0.7 * rand(), 0.3 + 0.7 * rand()];
    for (let y = y0; y < y0 + h; y++) {
      for (let x = x0; x < x0 + w; x++) {
        const idx = (y * width + x) * 3;
        pixels[idx] = color[0] + 0.05 * (rand() - 0.5);
        pixels[idx + 1] = color[1] + 0.05 * (rand() - 0.5);
        pixels[idx + 2] = color[2] + 0.05 * (rand() - 0.5);
      }
    }
  }
  return { width, height, pixels };
}

export async function writeSyntheticImages(
  outDir: string,
  count: number,
  seed = 0,
): Promise<string[]> {
  await fs.mkdir(outDir, { recursive: true });
  const paths: string[] = [];
  for (let i = 0; i < count; i++) {
    const file = path.join(outDir, `photo${String(i).padStart(3, "0")}.ppm`);
    await fs.writeFile(file, encodePpm(syntheticImage(seed * 1000 + i)));
    paths.push(file);
  }
  return paths;
}
