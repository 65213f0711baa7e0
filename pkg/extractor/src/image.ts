/**
 * Image loading and the resize policy.
 *
 * Supported inputs: PNG (via pngjs) and binary PPM (P6). Images resize
 * so the shorter side hits a target (default 480), then crop to the
 * nearest patch-multiple dimensions so the patch grid tiles exactly.
 */

import { promises as fs } from "fs";
import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** interleaved rgb, row-major, values in [0, 1] */
  pixels: Float32Array;
}

export async function loadImage(filePath: string): Promise<RgbImage> {
  const buf = await fs.readFile(filePath);
  if (buf.length >= 8 && buf.readUInt32BE(0) === 0x89504e47) {
    return decodePng(buf);
  }
  if (buf.length >= 2 && buf.toString("ascii", 0, 2) === "P6") {
    return decodePpm(buf);
  }
  throw new Error(`${filePath}: not a PNG or binary PPM image`);
}

function decodePng(buf: Buffer): RgbImage {
  const png = PNG.sync.read(buf);
  const pixels = new Float32Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    pixels[3 * i] = png.data[4 * i] / 255;
    pixels[3 * i + 1] = png.data[4 * i + 1] / 255;
    pixels[3 * i + 2] = png.data[4 * i + 2] / 255;
  }
  return { width: png.width, height: png.height, pixels };
}

function decodePpm(buf: Buffer): RgbImage {
  // header: "P6" <ws> width <ws> height <ws> maxval <single ws> payload
  let pos = 2;
  const tokens: number[] = [];
  while (tokens.length < 3) {
    while (pos < buf.length && isSpace(buf[pos])) pos++;
    if (buf[pos] === 0x23) {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !isSpace(buf[pos])) pos++;
    tokens.push(parseInt(buf.toString("ascii", start, pos), 10));
  }
  pos++; // the single whitespace byte before the payload
  const [width, height, maxval] = tokens;
  if (!width || !height || !maxval || maxval > 255) {
    throw new Error("unsupported PPM header");
  }
  if (buf.length < pos + width * height * 3) {
    throw new Error("truncated PPM payload");
  }
  const pixels = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height * 3; i++) {
    pixels[i] = buf[pos + i] / maxval;
  }
  return { width, height, pixels };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

export function encodePpm(image: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  const body = Buffer.alloc(image.width * image.height * 3);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(image.pixels[i] * 255)));
  }
  return Buffer.concat([header, body]);
}

export function resizeBilinear(image: RgbImage, width: number, height: number): RgbImage {
  const out = new Float32Array(width * height * 3);
  const sx = image.width / width;
  const sy = image.height / height;
  for (let y = 0; y < height; y++) {
    const fy = Math.min((y + 0.5) * sy - 0.5, image.height - 1);
    const y0 = Math.max(0, Math.floor(fy));
    const y1 = Math.min(image.height - 1, y0 + 1);
    const wy = Math.max(0, fy - y0);
    for (let x = 0; x < width; x++) {
      const fx = Math.min((x + 0.5) * sx - 0.5, image.width - 1);
      const x0 = Math.max(0, Math.floor(fx));
      const x1 = Math.min(image.width - 1, x0 + 1);
      const wx = Math.max(0, fx - x0);
      for (let c = 0; c < 3; c++) {
        const p00 = image.pixels[(y0 * image.width + x0) * 3 + c];
        const p01 = image.pixels[(y0 * image.width + x1) * 3 + c];
        const p10 = image.pixels[(y1 * image.width + x0) * 3 + c];
        const p11 = image.pixels[(y1 * image.width + x1) * 3 + c];
        out[(y * width + x) * 3 + c] =
          p00 * (1 - wy) * (1 - wx) +
          p01 * (1 - wy) * wx +
          p10 * wy * (1 - wx) +
          p11 * wy * wx;
      }
    }
  }
  return { width, height, pixels: out };
}

export function cropTopLeft(image: RgbImage, width: number, height: number): RgbImage {
  const out = new Float32Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < 3; c++) {
        out[(y * width + x) * 3 + c] = image.pixels[(y * image.width + x) * 3 + c];
      }
    }
  }
  return { width, height, pixels: out };
}

/**
 * Resize so the shorter side reaches `shortSide` (never upscale beyond
 * the original aspect), then crop to multiples of `multiple`.
 */
export function applyResizePolicy(
  image: RgbImage,
  shortSide: number,
  multiple: number,
): RgbImage {
  const scale = shortSide / Math.min(image.width, image.height);
  let w = Math.max(multiple, Math.round(image.width * scale));
  let h = Math.max(multiple, Math.round(image.height * scale));
  const resized = resizeBilinear(image, w, h);
  w = Math.floor(w / multiple) * multiple;
  h = Math.floor(h / multiple) * multiple;
  return cropTopLeft(resized, w, h);
}
