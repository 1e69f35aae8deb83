/**
 * The two bundled demo models: a fixed-score echo classifier and a
 * reimplementation of the engine's interval-threshold segmenter.  Both are
 * used by the cross-component equivalence tests; the echo classifier is also
 * the smallest possible template for wrapping a real model.
 */

import { ThresholdParams, thresholdSegment } from "./morphology.js";
import { AdapterHandler } from "./protocol.js";
import { Volume } from "./svol.js";

/** Loads the volume (so the protocol path is exercised) and answers a fixed
 * half/half score for the two study classes. */
export function echoClassifier(): AdapterHandler {
  return {
    classify(_volume: Volume): Record<string, number> {
      return { PLD: 0.5, MCC: 0.5 };
    },
  };
}

export function thresholdSegmenter(params: ThresholdParams): AdapterHandler {
  return {
    segment(volume: Volume): Volume {
      return thresholdSegment(volume, params);
    },
  };
}
