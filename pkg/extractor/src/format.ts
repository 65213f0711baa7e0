/**
 * Binary feature-grid (.cft) and descriptor-map (.cdm) files.
 *
 * Layout (all little-endian): 4 magic bytes, five uint32 header fields,
 * then a row-major float32 payload. Feature rows are written with their
 * raw magnitudes; normalization is the reader's job on the consuming
 * side, which needs the raw L1 energies.
 */

import { promises as fs } from "fs";
import * as path from "path";

export const CFT_MAGIC = "CFT1";
export const CDM_MAGIC = "CDM1";
export const DTYPE_F32 = 0;

const HEADER_BYTES = 24;

export interface FeatureGrid {
  gridH: number;
  gridW: number;
  dim: number;
  patchPx: number;
  /** rowMajor[(r * gridW + c) * dim + k] */
  data: Float32Array;
}

export interface DescriptorMap {
  mapH: number;
  mapW: number;
  dimD: number;
  stridePx: number;
  data: Float32Array;
}

function encode(magic: string, fields: number[], data: Float32Array): Buffer {
  const buf = Buffer.alloc(HEADER_BYTES + data.length * 4);
  buf.write(magic, 0, 4, "ascii");
  fields.forEach((v, i) => {
    if (!Number.isInteger(v) || v < 0) {
      throw new Error(`header field ${i} must be a non-negative integer, got ${v}`);
    }
    buf.writeUInt32LE(v, 4 + 4 * i);
  });
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

/** Write-temp-then-rename so partially written files never surface. */
async function atomicWrite(filePath: string, payload: Buffer): Promise<void> {
  const tmp = path.join(
    path.dirname(filePath),
    `.${path.basename(filePath)}.${process.pid}.tmp`,
  );
  await fs.writeFile(tmp, payload);
  await fs.rename(tmp, filePath);
}

export function encodeFeatureGrid(grid: FeatureGrid): Buffer {
  const expected = grid.gridH * grid.gridW * grid.dim;
  if (grid.data.length !== expected) {
    throw new Error(`payload length ${grid.data.length}, header implies ${expected}`);
  }
  return encode(
    CFT_MAGIC,
    [grid.gridH, grid.gridW, grid.dim, grid.patchPx, DTYPE_F32],
    grid.data,
  );
}

export function encodeDescriptorMap(map: DescriptorMap): Buffer {
  const expected = map.mapH * map.mapW * map.dimD;
  if (map.data.length !== expected) {
    throw new Error(`payload length ${map.data.length}, header implies ${expected}`);
  }
  return encode(
    CDM_MAGIC,
    [map.mapH, map.mapW, map.dimD, map.stridePx, DTYPE_F32],
    map.data,
  );
}

export async function writeFeatureGrid(grid: FeatureGrid, filePath: string) {
  await atomicWrite(filePath, encodeFeatureGrid(grid));
}

export async function writeDescriptorMap(map: DescriptorMap, filePath: string) {
  await atomicWrite(filePath, encodeDescriptorMap(map));
}

function decode(buf: Buffer, magic: string): { fields: number[]; data: Float32Array } {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`file shorter than the ${HEADER_BYTES}-byte header`);
  }
  if (buf.toString("ascii", 0, 4) !== magic) {
    throw new Error(`bad magic ${buf.toString("ascii", 0, 4)}, expected ${magic}`);
  }
  const fields = [0, 1, 2, 3, 4].map((i) => buf.readUInt32LE(4 + 4 * i));
  if (fields[4] !== DTYPE_F32) {
    throw new Error(`unsupported dtype code ${fields[4]}`);
  }
  const count = fields[0] * fields[1] * fields[2];
  if (buf.length !== HEADER_BYTES + count * 4) {
    throw new Error(`payload is ${buf.length - HEADER_BYTES} bytes, header implies ${count * 4}`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  }
  return { fields, data };
}

export async function readFeatureGrid(filePath: string): Promise<FeatureGrid> {
  const { fields, data } = decode(await fs.readFile(filePath), CFT_MAGIC);
  return { gridH: fields[0], gridW: fields[1], dim: fields[2], patchPx: fields[3], data };
}

export async function readDescriptorMap(filePath: string): Promise<DescriptorMap> {
  const { fields, data } = decode(await fs.readFile(filePath), CDM_MAGIC);
  return { mapH: fields[0], mapW: fields[1], dimD: fields[2], stridePx: fields[3], data };
}
