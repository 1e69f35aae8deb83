import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import {
  Dtype,
  SvolFormatError,
  Volume,
  decodeSvol,
  encodeSvol,
  flatIndex,
} from "../src/svol.js";

const tinyPath = fileURLToPath(new URL("../fixtures/tiny.svol", import.meta.url));

function realVolume(dims: [number, number, number], values: number[]): Volume {
  return {
    dims,
    spacing: [1, 1, 1],
    orientation: "LPS",
    dtype: Dtype.Real,
    data: Float32Array.from(values),
  };
}

describe("svol codec", () => {
  it("round-trips all three dtypes bit-exactly", () => {
    const volumes: Volume[] = [
      {
        dims: [2, 3, 2],
        spacing: [0.5, 0.7, 2.0],
        orientation: "RAS",
        dtype: Dtype.Hu,
        data: Int16Array.from([-32768, 32767, -1000, 0, 60, 5, 35, -1, 1, 2, 3, 4]),
      },
      {
        dims: [2, 2, 2],
        spacing: [1, 1, 1],
        orientation: "LPS",
        dtype: Dtype.Mask,
        data: Uint8Array.from([0, 1, 1, 0, 1, 0, 0, 1]),
      },
      realVolume([2, 2, 2], [0, 0.25, 0.5, 0.75, 1, 0.125, 0.375, 0.625]),
    ];
    for (const v of volumes) {
      const blob = encodeSvol(v);
      const back = decodeSvol(blob);
      expect(back.dims).toEqual(v.dims);
      expect(back.spacing).toEqual(v.spacing);
      expect(back.orientation).toBe(v.orientation);
      expect(back.dtype).toBe(v.dtype);
      expect(Array.from(back.data)).toEqual(Array.from(v.data));
      expect(encodeSvol(back).equals(blob)).toBe(true);
    }
  });

  it("reads the engine-written fixture", () => {
    const v = decodeSvol(readFileSync(tinyPath));
    expect(v.dims).toEqual([2, 2, 2]);
    expect(v.dtype).toBe(Dtype.Real);
    expect(v.orientation).toBe("LPS");
    // x-fastest: (1,0,0) is the second stored voxel, (0,0,1) the fifth
    expect(v.data[flatIndex(v.dims, 1, 0, 0)]).toBe(1.0);
    expect(v.data[flatIndex(v.dims, 0, 0, 1)]).toBe(0.25);
  });

  it("rejects bad magic", () => {
    const blob = encodeSvol(realVolume([1, 1, 1], [0.5]));
    blob.write("NOPE", 0, "latin1");
    expect(() => decodeSvol(blob)).toThrow(SvolFormatError);
    expect(() => decodeSvol(blob)).toThrow(/magic/);
  });

  it("rejects unsupported version", () => {
    const blob = encodeSvol(realVolume([1, 1, 1], [0.5]));
    blob.writeUInt32LE(7, 4);
    expect(() => decodeSvol(blob)).toThrow(/version/);
  });

  it("rejects trailing bytes", () => {
    const blob = encodeSvol(realVolume([1, 1, 1], [0.5]));
    expect(() => decodeSvol(Buffer.concat([blob, Buffer.from([0])]))).toThrow(/trailing/);
  });

  it("rejects every truncation cleanly", () => {
    const blob = encodeSvol(realVolume([2, 3, 2], new Array(12).fill(0.25)));
    // fuzz: every prefix must raise SvolFormatError, never crash
    for (let cut = 0; cut < blob.length; cut++) {
      expect(() => decodeSvol(blob.subarray(0, cut))).toThrow(SvolFormatError);
    }
  });

  it("rejects mask values outside {0,1}", () => {
    const v: Volume = {
      dims: [1, 1, 2],
      spacing: [1, 1, 1],
      orientation: "LPS",
      dtype: Dtype.Mask,
      data: Uint8Array.from([1, 9]),
    };
    expect(() => decodeSvol(encodeSvol(v))).toThrow(/outside/);
  });

  it("rejects invalid orientation codes", () => {
    const blob = encodeSvol(realVolume([1, 1, 1], [0.5]));
    blob.write("LLQ", 60, "latin1");
    expect(() => decodeSvol(blob)).toThrow(SvolFormatError);
  });
});
