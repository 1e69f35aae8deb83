/**
 * SVOL volume file format, byte-compatible with the segroute engine.
 *
 * Little-endian throughout: magic "SVOL" | u32 version=1 | u32 dtype code
 * (0 = HU int16, 1 = mask uint8, 2 = real float32) | 3 x u64 dims
 * | 3 x f64 spacing | 3 ASCII orientation bytes | 1 zero pad | raw voxels
 * in x-fastest order (flat offset i + nx*j + nx*ny*k).  No compression.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const SVOL_MAGIC = "SVOL";
export const SVOL_VERSION = 1;
export const HEADER_SIZE = 64;

export enum Dtype {
  Hu = 0,
  Mask = 1,
  Real = 2,
}

export type VoxelArray = Int16Array | Uint8Array | Float32Array;

export interface Volume {
  dims: [number, number, number];
  spacing: [number, number, number];
  orientation: string;
  dtype: Dtype;
  data: VoxelArray;
}

export class SvolFormatError extends Error {}

// Typed arrays are native-endian; the format is little-endian.
const probe = new Uint8Array(new Uint16Array([1]).buffer);
if (probe[0] !== 1) {
  throw new Error("SVOL reader requires a little-endian host");
}

const BYTES_PER_VOXEL: Record<Dtype, number> = {
  [Dtype.Hu]: 2,
  [Dtype.Mask]: 1,
  [Dtype.Real]: 4,
};

const ORIENTATION_PAIRS: Record<string, string> = {
  L: "LR", R: "LR", P: "PA", A: "PA", S: "SI", I: "SI",
};

export function validateOrientation(code: string): string {
  const families = [...code].map((c) => ORIENTATION_PAIRS[c]);
  if (code.length !== 3 || families.some((f) => f === undefined)) {
    throw new SvolFormatError(`invalid orientation code ${JSON.stringify(code)}`);
  }
  if (new Set(families).size !== 3) {
    throw new SvolFormatError(`orientation ${code} does not name three distinct axes`);
  }
  return code;
}

export function voxelCount(dims: [number, number, number]): number {
  return dims[0] * dims[1] * dims[2];
}

/** Flat offset of voxel (i, j, k) in x-fastest order. */
export function flatIndex(dims: [number, number, number], i: number, j: number, k: number): number {
  return i + dims[0] * (j + dims[1] * k);
}

export function decodeSvol(blob: Buffer): Volume {
  if (blob.length < 4 || blob.toString("latin1", 0, 4) !== SVOL_MAGIC) {
    throw new SvolFormatError("not an SVOL file (bad magic)");
  }
  if (blob.length < HEADER_SIZE) {
    throw new SvolFormatError(`header truncated at ${blob.length} bytes`);
  }
  const view = new DataView(blob.buffer, blob.byteOffset, blob.length);
  const version = view.getUint32(4, true);
  if (version !== SVOL_VERSION) {
    throw new SvolFormatError(`unsupported SVOL version ${version}`);
  }
  const code = view.getUint32(8, true);
  if (!(code in BYTES_PER_VOXEL)) {
    throw new SvolFormatError(`unknown dtype code ${code}`);
  }
  const dtype = code as Dtype;
  const dims: [number, number, number] = [0, 0, 0];
  for (let a = 0; a < 3; a++) {
    const big = view.getBigUint64(12 + 8 * a, true);
    if (big <= 0n || big > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new SvolFormatError(`bad dimension ${big}`);
    }
    dims[a] = Number(big);
  }
  const spacing: [number, number, number] = [
    view.getFloat64(36, true),
    view.getFloat64(44, true),
    view.getFloat64(52, true),
  ];
  if (spacing.some((s) => !Number.isFinite(s) || s <= 0)) {
    throw new SvolFormatError(`bad spacing ${spacing}`);
  }
  const orientation = validateOrientation(blob.toString("latin1", 60, 63));

  const expected = voxelCount(dims) * BYTES_PER_VOXEL[dtype];
  const payload = blob.length - HEADER_SIZE;
  if (payload < expected) {
    throw new SvolFormatError(`payload has ${payload} bytes, dims require ${expected}`);
  }
  if (payload > expected) {
    throw new SvolFormatError(`payload has ${payload} trailing bytes beyond ${expected}`);
  }

  // copy so the typed array is aligned and owns its memory
  const raw = Buffer.from(blob.subarray(HEADER_SIZE));
  let data: VoxelArray;
  if (dtype === Dtype.Hu) {
    data = new Int16Array(raw.buffer, raw.byteOffset, voxelCount(dims));
  } else if (dtype === Dtype.Mask) {
    data = new Uint8Array(raw.buffer, raw.byteOffset, voxelCount(dims));
    for (const v of data) {
      if (v !== 0 && v !== 1) throw new SvolFormatError(`mask voxel value ${v} outside {0,1}`);
    }
  } else {
    data = new Float32Array(raw.buffer, raw.byteOffset, voxelCount(dims));
  }
  return { dims, spacing, orientation, dtype, data };
}

export function encodeSvol(volume: Volume): Buffer {
  const n = voxelCount(volume.dims);
  if (volume.data.length !== n) {
    throw new SvolFormatError(`payload length ${volume.data.length} does not match dims ${volume.dims}`);
  }
  validateOrientation(volume.orientation);
  const header = Buffer.alloc(HEADER_SIZE);
  header.write(SVOL_MAGIC, 0, "latin1");
  const view = new DataView(header.buffer, header.byteOffset, HEADER_SIZE);
  view.setUint32(4, SVOL_VERSION, true);
  view.setUint32(8, volume.dtype, true);
  for (let a = 0; a < 3; a++) view.setBigUint64(12 + 8 * a, BigInt(volume.dims[a]), true);
  view.setFloat64(36, volume.spacing[0], true);
  view.setFloat64(44, volume.spacing[1], true);
  view.setFloat64(52, volume.spacing[2], true);
  header.write(volume.orientation, 60, "latin1");
  const payload = Buffer.from(volume.data.buffer, volume.data.byteOffset, n * BYTES_PER_VOXEL[volume.dtype]);
  return Buffer.concat([header, payload]);
}

export function readSvol(path: string): Volume {
  let blob: Buffer;
  try {
    blob = readFileSync(path);
  } catch {
    throw new SvolFormatError(`cannot read volume file: ${path}`);
  }
  return decodeSvol(blob);
}

export function writeSvol(volume: Volume, path: string): void {
  writeFileSync(path, encodeSvol(volume));
}
