/**
 * Per-image extraction: decode, apply the resize policy, encode patch
 * features and descriptor cells, write the binary files atomically.
 */

import * as path from "path";
import { promises as fs } from "fs";

import { DEFAULT_CONFIG, ExtractorConfig, encodeCells, validateConfig } from "./backbone.js";
import { writeDescriptorMap, writeFeatureGrid } from "./format.js";
import { applyResizePolicy, loadImage } from "./image.js";

export interface ExtractResult {
  imageId: string;
  featurePath: string;
  descriptorPath: string;
  imageWPx: number;
  imageHPx: number;
  gridH: number;
  gridW: number;
  mapH: number;
  mapW: number;
}

export interface BatchResult {
  extracted: ExtractResult[];
  skipped: { path: string; reason: string }[];
}

function leastCommonMultiple(a: number, b: number): number {
  const gcd = (x: number, y: number): number => (y === 0 ? x : gcd(y, x % y));
  return (a / gcd(a, b)) * b;
}

export async function extractImage(
  imagePath: string,
  outDir: string,
  config: ExtractorConfig = DEFAULT_CONFIG,
): Promise<ExtractResult> {
  validateConfig(config);
  const raw = await loadImage(imagePath);
  // crop to a multiple of both cell sizes so grid and map tile exactly
  const multiple = leastCommonMultiple(config.patchPx, config.stridePx);
  const image = applyResizePolicy(raw, config.shortSide, multiple);

  const feats = encodeCells(image, config.patchPx, config.dim, config.seed);
  const descs = encodeCells(image, config.stridePx, config.dimD, config.seed + 1);

  const imageId = path.basename(imagePath).replace(/\.[^.]+$/, "");
  const featurePath = path.join(outDir, `${imageId}.cft`);
  const descriptorPath = path.join(outDir, `${imageId}.cdm`);
  await fs.mkdir(outDir, { recursive: true });
  await writeFeatureGrid(
    {
      gridH: feats.cellsH,
      gridW: feats.cellsW,
      dim: config.dim,
      patchPx: config.patchPx,
      data: feats.rows,
    },
    featurePath,
  );
  await writeDescriptorMap(
    {
      mapH: descs.cellsH,
      mapW: descs.cellsW,
      dimD: config.dimD,
      stridePx: config.stridePx,
      data: descs.rows,
    },
    descriptorPath,
  );
  return {
    imageId,
    featurePath,
    descriptorPath,
    imageWPx: image.width,
    imageHPx: image.height,
    gridH: feats.cellsH,
    gridW: feats.cellsW,
    mapH: descs.cellsH,
    mapW: descs.cellsW,
  };
}

/** Extract many images; undecodable inputs are skipped and reported. */
export async function extractBatch(
  imagePaths: string[],
  outDir: string,
  config: ExtractorConfig = DEFAULT_CONFIG,
): Promise<BatchResult> {
  const extracted: ExtractResult[] = [];
  const skipped: { path: string; reason: string }[] = [];
  for (const imagePath of imagePaths) {
    try {
      extracted.push(await extractImage(imagePath, outDir, config));
    } catch (err) {
      skipped.push({ path: imagePath, reason: (err as Error).message });
    }
  }
  return { extracted, skipped };
}
