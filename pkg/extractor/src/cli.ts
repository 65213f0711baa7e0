#!/usr/bin/env node
/**
 * Extractor command line.
 *
 *   regionseek-extract extract --out DIR [options] IMAGE...
 *   regionseek-extract manifest DIR
 *   regionseek-extract synth-images --out DIR [--count N] [--seed N]
 */

import { DEFAULT_CONFIG, ExtractorConfig } from "./backbone.js";
import { extractBatch } from "./extract.js";
import { writeManifest } from "./manifest.js";
import { writeSyntheticImages } from "./testimages.js";

interface Parsed {
  command: string;
  positional: string[];
  options: Map<string, string>;
}

function parseArgs(argv: string[]): Parsed {
  const [command, ...rest] = argv;
  const positional: string[] = [];
  const options = new Map<string, string>();
  for (let i = 0; i < rest.length; i++) {
    const arg = rest[i];
    if (arg.startsWith("--")) {
      options.set(arg.slice(2), rest[++i] ?? "");
    } else {
      positional.push(arg);
    }
  }
  return { command: command ?? "", positional, options };
}

function configFrom(options: Map<string, string>): ExtractorConfig {
  const cfg = { ...DEFAULT_CONFIG };
  const num = (key: string, assign: (v: number) => void) => {
    const v = options.get(key);
    if (v !== undefined) assign(parseInt(v, 10));
  };
  num("patch-px", (v) => {
    cfg.patchPx = v;
    cfg.backbone = `patch-stats/${v}`;
  });
  num("stride-px", (v) => {
    cfg.stridePx = v;
    cfg.descriptorBackbone = `patch-stats-pool/${v}`;
  });
  num("dim", (v) => (cfg.dim = v));
  num("dim-d", (v) => (cfg.dimD = v));
  num("short-side", (v) => (cfg.shortSide = v));
  num("seed", (v) => (cfg.seed = v));
  return cfg;
}

async function main(): Promise<number> {
  const { command, positional, options } = parseArgs(process.argv.slice(2));
  if (command === "extract") {
    const out = options.get("out");
    if (!out || positional.length === 0) {
      console.error("usage: extract --out DIR [options] IMAGE...");
      return 1;
    }
    const result = await extractBatch(positional, out, configFrom(options));
    for (const skip of result.skipped) {
      console.error(`skipped ${skip.path}: ${skip.reason}`);
    }
    console.log(`extracted ${result.extracted.length}/${positional.length} images -> ${out}`);
    return result.skipped.length > 0 ? 2 : 0;
  }
  if (command === "manifest") {
    if (positional.length !== 1) {
      console.error("usage: manifest DIR");
      return 1;
    }
    const result = await writeManifest(positional[0]);
    for (const warning of result.warnings) {
      console.error(`warning: ${warning}`);
    }
    console.log(`manifest.json with ${result.entries.length} entries -> ${positional[0]}`);
    return 0;
  }
  if (command === "synth-images") {
    const out = options.get("out");
    if (!out) {
      console.error("usage: synth-images --out DIR [--count N] [--seed N]");
      return 1;
    }
    const count = parseInt(options.get("count") ?? "3", 10);
    const seed = parseInt(options.get("seed") ?? "0", 10);
    const files = await writeSyntheticImages(out, count, seed);
    console.log(`wrote ${files.length} synthetic images -> ${out}`);
    return 0;
  }
  console.error("commands: extract, manifest, synth-images");
  return 1;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${(err as Error).message}`);
    process.exit(1);
  },
);
