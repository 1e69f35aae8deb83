/**
 * Binary 3D morphology matching the engine's threshold segmenter exactly:
 * interval threshold, 6-connected closing on an infinite background, and
 * largest-6-connected-component selection with a deterministic tie-break.
 */

import { Dtype, Volume, flatIndex, voxelCount } from "./svol.js";

export interface ThresholdParams {
  lo: number;
  hi: number;
  closingRadius: number;
  keepLargest: boolean;
}

type Dims = [number, number, number];

function oneStep(
  src: Uint8Array,
  dst: Uint8Array,
  dims: Dims,
  dilate: boolean,
): void {
  const [nx, ny, nz] = dims;
  for (let k = 0; k < nz; k++) {
    for (let j = 0; j < ny; j++) {
      for (let i = 0; i < nx; i++) {
        const p = flatIndex(dims, i, j, k);
        // out-of-bounds neighbors count as background
        const center = src[p] !== 0;
        const xm = i > 0 && src[p - 1] !== 0;
        const xp = i < nx - 1 && src[p + 1] !== 0;
        const ym = j > 0 && src[p - nx] !== 0;
        const yp = j < ny - 1 && src[p + nx] !== 0;
        const zm = k > 0 && src[p - nx * ny] !== 0;
        const zp = k < nz - 1 && src[p + nx * ny] !== 0;
        if (dilate) {
          dst[p] = center || xm || xp || ym || yp || zm || zp ? 1 : 0;
        } else {
          dst[p] = center && xm && xp && ym && yp && zm && zp ? 1 : 0;
        }
      }
    }
  }
}

/**
 * Closing by the L1 ball of the given radius.  The mask is padded by 2r so
 * boundary voxels behave as if surrounded by background, then dilated and
 * eroded r steps with the 6-connected cross.
 */
export function close6(mask: Uint8Array, dims: Dims, radius: number): Uint8Array {
  if (radius <= 0) return mask;
  const pad = 2 * radius;
  const pdims: Dims = [dims[0] + 2 * pad, dims[1] + 2 * pad, dims[2] + 2 * pad];
  let a = new Uint8Array(voxelCount(pdims));
  let b = new Uint8Array(voxelCount(pdims));
  for (let k = 0; k < dims[2]; k++) {
    for (let j = 0; j < dims[1]; j++) {
      for (let i = 0; i < dims[0]; i++) {
        a[flatIndex(pdims, i + pad, j + pad, k + pad)] = mask[flatIndex(dims, i, j, k)];
      }
    }
  }
  for (let step = 0; step < radius; step++) {
    oneStep(a, b, pdims, true);
    [a, b] = [b, a];
  }
  for (let step = 0; step < radius; step++) {
    oneStep(a, b, pdims, false);
    [a, b] = [b, a];
  }
  const out = new Uint8Array(voxelCount(dims));
  for (let k = 0; k < dims[2]; k++) {
    for (let j = 0; j < dims[1]; j++) {
      for (let i = 0; i < dims[0]; i++) {
        out[flatIndex(dims, i, j, k)] = a[flatIndex(pdims, i + pad, j + pad, k + pad)];
      }
    }
  }
  return out;
}

/**
 * Keep only the largest 6-connected component.  Components are seeded in
 * lexicographic (i, j, k) order, so on a size tie the component whose first
 * voxel comes earliest in that order wins; this matches the engine.
 */
export function largestComponent6(mask: Uint8Array, dims: Dims): Uint8Array {
  const [nx, ny, nz] = dims;
  const labels = new Int32Array(mask.length); // 0 = unlabeled
  const sizes: number[] = [0];
  const queue = new Int32Array(mask.length);
  let nextLabel = 0;

  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      for (let k = 0; k < nz; k++) {
        const seed = flatIndex(dims, i, j, k);
        if (mask[seed] === 0 || labels[seed] !== 0) continue;
        nextLabel += 1;
        let head = 0;
        let tail = 0;
        queue[tail++] = seed;
        labels[seed] = nextLabel;
        let size = 0;
        while (head < tail) {
          const p = queue[head++];
          size += 1;
          const pk = Math.floor(p / (nx * ny));
          const pj = Math.floor((p - pk * nx * ny) / nx);
          const pi = p - pk * nx * ny - pj * nx;
          const neighbors = [
            pi > 0 ? p - 1 : -1,
            pi < nx - 1 ? p + 1 : -1,
            pj > 0 ? p - nx : -1,
            pj < ny - 1 ? p + nx : -1,
            pk > 0 ? p - nx * ny : -1,
            pk < nz - 1 ? p + nx * ny : -1,
          ];
          for (const q of neighbors) {
            if (q >= 0 && mask[q] !== 0 && labels[q] === 0) {
              labels[q] = nextLabel;
              queue[tail++] = q;
            }
          }
        }
        sizes.push(size);
      }
    }
  }

  if (nextLabel === 0) {
    throw new Error("mask has no foreground components");
  }
  let best = 1;
  for (let lab = 2; lab <= nextLabel; lab++) {
    if (sizes[lab] > sizes[best]) best = lab; // ties keep the earlier seed
  }
  const out = new Uint8Array(mask.length);
  for (let p = 0; p < mask.length; p++) out[p] = labels[p] === best ? 1 : 0;
  return out;
}

/** Interval threshold, then closing, then optionally largest component. */
export function thresholdSegment(volume: Volume, params: ThresholdParams): Volume {
  if (volume.dtype !== Dtype.Real) {
    throw new Error(`threshold segmenter requires a real-valued volume, got dtype ${volume.dtype}`);
  }
  const n = voxelCount(volume.dims);
  let mask: Uint8Array = new Uint8Array(n);
  const data = volume.data as Float32Array;
  for (let p = 0; p < n; p++) {
    const x = data[p]; // exact float64 widening of the stored float32
    mask[p] = x >= params.lo && x <= params.hi ? 1 : 0;
  }
  mask = close6(mask, volume.dims, params.closingRadius);
  if (params.keepLargest) {
    mask = largestComponent6(mask, volume.dims);
  }
  return {
    dims: volume.dims,
    spacing: volume.spacing,
    orientation: volume.orientation,
    dtype: Dtype.Mask,
    data: mask,
  };
}
