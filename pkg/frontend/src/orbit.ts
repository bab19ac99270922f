export type Vec3 = [number, number, number];

// Keep the look direction off the pole so the up vector never degenerates.
export const MAX_ELEVATION = Math.PI / 2 - 1e-4;
export const MIN_RADIUS = 1e-3;

const DRAG_RATE = 0.008; // radians per pixel
const ZOOM_RATE = 0.0015; // log-radius per wheel unit

export interface OrbitState {
  azimuth: number;
  elevation: number;
  radius: number;
  target: Vec3;
}

export function clampElevation(elevation: number): number {
  return Math.min(MAX_ELEVATION, Math.max(-MAX_ELEVATION, elevation));
}

export function clampRadius(radius: number): number {
  return Math.max(MIN_RADIUS, radius);
}

/** Camera position on the orbit sphere, z-up spherical coordinates. */
export function orbitEye(state: OrbitState): Vec3 {
  const ce = Math.cos(state.elevation);
  return [
    state.target[0] + state.radius * ce * Math.cos(state.azimuth),
    state.target[1] + state.radius * ce * Math.sin(state.azimuth),
    state.target[2] + state.radius * Math.sin(state.elevation),
  ];
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: Vec3): number {
  return Math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

/**
 * World-from-camera matrix, row-major 16 floats, for a camera at `eye`
 * facing `target`.  Camera axes: +x right, +y down, +z forward, so image
 * rows run downward in world space like the render service expects.
 */
export function lookAt(eye: Vec3, target: Vec3, up: Vec3 = [0, 0, 1]): number[] {
  const gaze = sub(target, eye);
  const gazeLen = norm(gaze);
  if (gazeLen === 0) throw new Error("eye and target coincide");
  const forward = scale(gaze, 1 / gazeLen);
  const side = cross(forward, up);
  const sideLen = norm(side);
  if (sideLen < 1e-9) throw new Error("view direction parallel to up vector");
  const right = scale(side, 1 / sideLen);
  const down = cross(forward, right);
  return [
    right[0], down[0], forward[0], eye[0],
    right[1], down[1], forward[1], eye[1],
    right[2], down[2], forward[2], eye[2],
    0, 0, 0, 1,
  ];
}

export function orbitPose(state: OrbitState): number[] {
  return lookAt(orbitEye(state), state.target);
}

/** Pointer drag in pixels; dragging keeps elevation inside its clamp. */
export function orbitDrag(state: OrbitState, dxPx: number, dyPx: number): OrbitState {
  return {
    ...state,
    azimuth: state.azimuth - dxPx * DRAG_RATE,
    elevation: clampElevation(state.elevation + dyPx * DRAG_RATE),
  };
}

export function orbitZoom(state: OrbitState, wheelDelta: number): OrbitState {
  return { ...state, radius: clampRadius(state.radius * Math.exp(wheelDelta * ZOOM_RATE)) };
}

/** Framing pose used before any interaction: three-quarter view, close
 * enough that the scene fills most of the canvas. */
export function defaultOrbit(halfExtent: number, center: Vec3 = [0, 0, 0]): OrbitState {
  return {
    azimuth: -Math.PI / 4,
    elevation: Math.PI / 6,
    radius: 3.2 * halfExtent,
    target: center,
  };
}
