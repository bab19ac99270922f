import type { Meta } from "./protocol.js";
import { defaultOrbit, type OrbitState } from "./orbit.js";

export type Variant = "as-loaded" | "force-baseline";

export interface ViewerState {
  orbit: OrbitState;
  playing: boolean;
  fpsEstimate: number;
  timeStep: number;
  variant: Variant;
}

export const PLAYBACK_HZ = 10;

export function initialState(meta: Meta): ViewerState {
  const center = meta.bounds.centers[0] ?? [0, 0, 0];
  return {
    orbit: defaultOrbit(meta.bounds.half_extent, [center[0], center[1], center[2]]),
    playing: false,
    fpsEstimate: 0,
    timeStep: 0,
    variant: "as-loaded",
  };
}

export function setTimeStep(state: ViewerState, t: number, nFrames: number): ViewerState {
  const clamped = Math.min(nFrames - 1, Math.max(0, Math.trunc(t)));
  return { ...state, timeStep: clamped };
}

/** Advance by whole frames, wrapping at the end of the loop. */
export function stepTime(state: ViewerState, steps: number, nFrames: number): ViewerState {
  const t = (((state.timeStep + steps) % nFrames) + nFrames) % nFrames;
  return { ...state, timeStep: t };
}

/**
 * Frames to advance after `elapsedMs` of playback.  One settled frame per
 * request means a lagging service yields a larger elapsed gap, so the
 * count naturally skips time steps instead of letting playback stall.
 */
export function playbackSteps(elapsedMs: number, rateHz: number = PLAYBACK_HZ): number {
  return Math.floor((elapsedMs * rateHz) / 1000);
}

export function toggleVariant(state: ViewerState): ViewerState {
  return {
    ...state,
    variant: state.variant === "as-loaded" ? "force-baseline" : "as-loaded",
  };
}

/** Exponential moving average keeps the overlay readable while frame
 * times jitter. */
export function updateFps(state: ViewerState, frameMs: number): ViewerState {
  if (frameMs <= 0) return state;
  const instant = 1000 / frameMs;
  const fps = state.fpsEstimate === 0 ? instant : 0.8 * state.fpsEstimate + 0.2 * instant;
  return { ...state, fpsEstimate: fps };
}
