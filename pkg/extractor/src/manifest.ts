/**
 * Manifest assembly: pair every .cft with its .cdm in a directory and
 * emit manifest.json in the schema the search pipeline consumes. Files
 * without a partner are listed as warnings, not errors.
 */

import { promises as fs } from "fs";
import * as path from "path";

import { readFeatureGrid } from "./format.js";

export interface ManifestEntry {
  image_id: string;
  feature_path: string;
  descriptor_path: string;
  image_w_px: number;
  image_h_px: number;
  ground_truth: unknown[];
}

export interface ManifestResult {
  entries: ManifestEntry[];
  warnings: string[];
}

export async function buildManifest(directory: string): Promise<ManifestResult> {
  const names = await fs.readdir(directory);
  const grids = new Set<string>();
  const maps = new Set<string>();
  for (const name of names) {
    if (name.endsWith(".cft")) grids.add(name.slice(0, -4));
    if (name.endsWith(".cdm")) maps.add(name.slice(0, -4));
  }

  const warnings: string[] = [];
  const entries: ManifestEntry[] = [];
  for (const stem of [...grids].sort()) {
    if (!maps.has(stem)) {
      warnings.push(`${stem}.cft has no matching .cdm`);
      continue;
    }
    const grid = await readFeatureGrid(path.join(directory, `${stem}.cft`));
    entries.push({
      image_id: stem,
      feature_path: `${stem}.cft`,
      descriptor_path: `${stem}.cdm`,
      image_w_px: grid.gridW * grid.patchPx,
      image_h_px: grid.gridH * grid.patchPx,
      ground_truth: [],
    });
  }
  for (const stem of [...maps].sort()) {
    if (!grids.has(stem)) {
      warnings.push(`${stem}.cdm has no matching .cft`);
    }
  }
  return { entries, warnings };
}

export async function writeManifest(directory: string): Promise<ManifestResult> {
  const result = await buildManifest(directory);
  const doc = { entries: result.entries };
  await fs.writeFile(
    path.join(directory, "manifest.json"),
    JSON.stringify(doc, null, 2) + "\n",
  );
  return result;
}
