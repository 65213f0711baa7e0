import { mkdtempSync, readFileSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { DEFAULT_CONFIG, validateConfig } from "../src/backbone.js";
import { extractBatch, extractImage } from "../src/extract.js";
import { encodePpm } from "../src/image.js";
import { readDescriptorMap, readFeatureGrid } from "../src/format.js";
import { syntheticImage, writeSyntheticImages } from "../src/testimages.js";

function tmp(): string {
  return mkdtempSync(path.join(tmpdir(), "extractor-test-"));
}

describe("extract_image", () => {
  it("produces the grid geometry the resize policy implies", async () => {
    const dir = tmp();
    writeFileSync(path.join(dir, "img.ppm"), encodePpm(syntheticImage(1, 640, 480)));
    const result = await extractImage(path.join(dir, "img.ppm"), dir);
    // shorter side 480 -> no scaling; 640x480 is already a multiple of 16
    expect(result.imageWPx).toBe(640);
    expect(result.imageHPx).toBe(480);
    expect(result.gridW).toBe(640 / 8);
    expect(result.gridH).toBe(480 / 8);
    expect(result.mapW).toBe(640 / 16);
    expect(result.mapH).toBe(480 / 16);

    const grid = await readFeatureGrid(result.featurePath);
    expect(grid.gridH).toBe(result.gridH);
    expect(grid.gridW).toBe(result.gridW);
    expect(grid.dim).toBe(DEFAULT_CONFIG.dim);
    expect(grid.patchPx).toBe(8);
    const map = await readDescriptorMap(result.descriptorPath);
    expect(map.stridePx).toBe(16);
    expect(map.dimD).toBe(DEFAULT_CONFIG.dimD);
  });

  it("resizes larger inputs down to the short-side target", async () => {
    const dir = tmp();
    writeFileSync(path.join(dir, "big.ppm"), encodePpm(syntheticImage(2, 1280, 960)));
    const result = await extractImage(path.join(dir, "big.ppm"), dir);
    expect(Math.min(result.imageWPx, result.imageHPx)).toBe(480);
    expect(result.imageWPx % 16).toBe(0);
    expect(result.imageHPx % 16).toBe(0);
  });

  it("is deterministic: same image, identical bytes", async () => {
    const dir = tmp();
    writeFileSync(path.join(dir, "img.ppm"), encodePpm(syntheticImage(3, 320, 320)));
    const a = await extractImage(path.join(dir, "img.ppm"), path.join(dir, "a"));
    const b = await extractImage(path.join(dir, "img.ppm"), path.join(dir, "b"));
    expect(readFileSync(a.featurePath)).toEqual(readFileSync(b.featurePath));
    expect(readFileSync(a.descriptorPath)).toEqual(readFileSync(b.descriptorPath));
  });

  it("gives object patches more energy than background patches", async () => {
    const dir = tmp();
    writeFileSync(path.join(dir, "img.ppm"), encodePpm(syntheticImage(4, 320, 320)));
    const result = await extractImage(path.join(dir, "img.ppm"), dir);
    const grid = await readFeatureGrid(result.featurePath);
    const l1 = new Array(grid.gridH * grid.gridW).fill(0);
    for (let r = 0; r < l1.length; r++) {
      for (let k = 0; k < grid.dim; k++) {
        l1[r] += Math.abs(grid.data[r * grid.dim + k]);
      }
    }
    const sorted = [...l1].sort((x, y) => x - y);
    const lo = sorted[Math.floor(sorted.length * 0.1)];
    const hi = sorted[Math.floor(sorted.length * 0.9)];
    expect(hi).toBeGreaterThan(lo * 2);
  });

  it("skips undecodable files and keeps going", async () => {
    const dir = tmp();
    writeFileSync(path.join(dir, "junk.ppm"), Buffer.from("not an image"));
    const good = await writeSyntheticImages(dir, 1, 9);
    const result = await extractBatch(
      [path.join(dir, "junk.ppm"), ...good],
      path.join(dir, "out"),
    );
    expect(result.extracted.length).toBe(1);
    expect(result.skipped.length).toBe(1);
    expect(result.skipped[0].path).toContain("junk");
  });

  it("rejects configs whose variant name disagrees with the cell size", () => {
    expect(() =>
      validateConfig({ ...DEFAULT_CONFIG, backbone: "patch-stats/16" }),
    ).toThrow(/cell size/);
    expect(() => validateConfig({ ...DEFAULT_CONFIG })).not.toThrow();
  });
});
