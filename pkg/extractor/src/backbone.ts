/**
 * Deterministic patch encoders standing in for heavyweight backbones.
 *
 * Each patch (or descriptor cell) is summarized by local color and
 * texture statistics, mapped to a direction through random Fourier
 * features (so cosine similarity behaves like an RBF kernel on the
 * statistics: alike patches align, unlike patches decorrelate), and
 * scaled by the patch's content energy so the raw L1 norms downstream
 * separate busy regions from flat background. The encoders are pure
 * functions of (pixels, config): the same image always produces
 * identical files.
 *
 * No pretrained network ships with this package; the backbone interface
 * is the seam where a real ViT/CNN exporter plugs in.
 */

import { RgbImage } from "./image.js";

export interface ExtractorConfig {
  /** feature backbone variant; must end in "/<patchPx>" */
  backbone: string;
  patchPx: number;
  dim: number;
  /** descriptor backbone variant; must end in "/<stridePx>" */
  descriptorBackbone: string;
  stridePx: number;
  dimD: number;
  /** resize policy: shorter side target before patch-multiple crop */
  shortSide: number;
  seed: number;
}

export const DEFAULT_CONFIG: ExtractorConfig = {
  backbone: "patch-stats/8",
  patchPx: 8,
  dim: 64,
  descriptorBackbone: "patch-stats-pool/16",
  stridePx: 16,
  dimD: 32,
  shortSide: 480,
  seed: 0,
};

export function validateConfig(config: ExtractorConfig): void {
  for (const [name, cell] of [
    [config.backbone, config.patchPx],
    [config.descriptorBackbone, config.stridePx],
  ] as [string, number][]) {
    const suffix = name.split("/").pop();
    if (suffix === undefined || parseInt(suffix, 10) !== cell) {
      throw new Error(
        `variant ${name} declares cell size ${suffix}, config says ${cell}`,
      );
    }
  }
  if (config.dim < 1 || config.dimD < 1 || config.shortSide < config.patchPx) {
    throw new Error("dim, dimD must be >= 1 and shortSide >= patchPx");
  }
}

/** mulberry32: tiny deterministic PRNG for the projection matrices. */
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

const N_STATS = 11;

// RBF bandwidth on the statistics: within-region distances (<~0.15)
// keep similarity near 1, cross-region distances (>~0.5) fall below
// the downstream affinity threshold.
const KERNEL_BANDWIDTH = 0.25;

interface FourierBasis {
  /** dim x N_STATS frequency rows, already divided by the bandwidth */
  freq: Float64Array;
  /** dim phase offsets in [0, 2*pi) */
  phase: Float64Array;
}

function fourierBasis(seed: number, dim: number): FourierBasis {
  const rand = mulberry32(seed);
  const freq = new Float64Array(dim * N_STATS);
  for (let i = 0; i < freq.length; i++) {
    // approximate standard normal from 6 uniforms
    let s = 0;
    for (let k = 0; k < 6; k++) s += rand();
    freq[i] = ((s - 3) / Math.sqrt(0.5)) / KERNEL_BANDWIDTH;
  }
  const phase = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    phase[i] = rand() * 2 * Math.PI;
  }
  return { freq, phase };
}

/**
 * Color/texture statistics of one cell: channel means and deviations,
 * mean absolute luminance gradients, luminance mean and range.
 */
function cellStats(
  image: RgbImage,
  x0: number,
  y0: number,
  cell: number,
): Float64Array {
  const stats = new Float64Array(N_STATS);
  const sums = [0, 0, 0];
  const sq = [0, 0, 0];
  let gx = 0;
  let gy = 0;
  let lumaMin = Infinity;
  let lumaMax = -Infinity;
  const n = cell * cell;
  for (let dy = 0; dy < cell; dy++) {
    for (let dx = 0; dx < cell; dx++) {
      const idx = ((y0 + dy) * image.width + (x0 + dx)) * 3;
      const r = image.pixels[idx];
      const g = image.pixels[idx + 1];
      const b = image.pixels[idx + 2];
      sums[0] += r;
      sums[1] += g;
      sums[2] += b;
      sq[0] += r * r;
      sq[1] += g * g;
      sq[2] += b * b;
      const luma = 0.299 * r + 0.587 * g + 0.114 * b;
      lumaMin = Math.min(lumaMin, luma);
      lumaMax = Math.max(lumaMax, luma);
      if (dx + 1 < cell) {
        const right = ((y0 + dy) * image.width + (x0 + dx + 1)) * 3;
        gx += Math.abs(
          0.299 * image.pixels[right] +
            0.587 * image.pixels[right + 1] +
            0.114 * image.pixels[right + 2] -
            luma,
        );
      }
      if (dy + 1 < cell) {
        const below = ((y0 + dy + 1) * image.width + (x0 + dx)) * 3;
        gy += Math.abs(
          0.299 * image.pixels[below] +
            0.587 * image.pixels[below + 1] +
            0.114 * image.pixels[below + 2] -
            luma,
        );
      }
    }
  }
  for (let c = 0; c < 3; c++) {
    const mean = sums[c] / n;
    stats[c] = mean;
    stats[3 + c] = Math.sqrt(Math.max(0, sq[c] / n - mean * mean));
  }
  stats[6] = gx / (cell * (cell - 1) || 1);
  stats[7] = gy / (cell * (cell - 1) || 1);
  const lumaMean = 0.299 * stats[0] + 0.587 * stats[1] + 0.114 * stats[2];
  stats[8] = lumaMean;
  stats[9] = lumaMax - lumaMin;
  stats[10] = lumaMean * lumaMean;
  return stats;
}

/** Busy cells should dominate the image's high-energy patch set. */
function contentEnergy(stats: Float64Array): number {
  return 0.05 + stats[8] + stats[9] + 4 * (stats[6] + stats[7]);
}

export function encodeCells(
  image: RgbImage,
  cell: number,
  dim: number,
  seed: number,
): { rows: Float32Array; cellsH: number; cellsW: number } {
  if (image.width % cell !== 0 || image.height % cell !== 0) {
    throw new Error(`image ${image.width}x${image.height} not a multiple of ${cell}`);
  }
  const cellsH = image.height / cell;
  const cellsW = image.width / cell;
  const basis = fourierBasis(seed, dim);
  const rows = new Float32Array(cellsH * cellsW * dim);
  const direction = new Float64Array(dim);
  for (let r = 0; r < cellsH; r++) {
    for (let c = 0; c < cellsW; c++) {
      const stats = cellStats(image, c * cell, r * cell, cell);
      let norm = 0;
      for (let k = 0; k < dim; k++) {
        let acc = basis.phase[k];
        for (let s = 0; s < N_STATS; s++) {
          acc += basis.freq[k * N_STATS + s] * stats[s];
        }
        direction[k] = Math.cos(acc);
        norm += direction[k] * direction[k];
      }
      norm = Math.sqrt(norm) || 1;
      const scale = contentEnergy(stats) / norm;
      const base = (r * cellsW + c) * dim;
      for (let k = 0; k < dim; k++) {
        rows[base + k] = direction[k] * scale;
      }
    }
  }
  return { rows, cellsH, cellsW };
}
