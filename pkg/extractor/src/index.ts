export {
  CDM_MAGIC,
  CFT_MAGIC,
  DescriptorMap,
  FeatureGrid,
  readDescriptorMap,
  readFeatureGrid,
  writeDescriptorMap,
  writeFeatureGrid,
} from "./format.js";
export { DEFAULT_CONFIG, ExtractorConfig, validateConfig } from "./backbone.js";
export { BatchResult, ExtractResult, extractBatch, extractImage } from "./extract.js";
export { applyResizePolicy, encodePpm, loadImage, resizeBilinear } from "./image.js";
export { ManifestEntry, ManifestResult, buildManifest, writeManifest } from "./manifest.js";
export { syntheticImage, writeSyntheticImages } from "./testimages.js";
