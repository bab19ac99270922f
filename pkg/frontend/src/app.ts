import type { FrameReply } from "./protocol.js";
import { orbitDrag, orbitPose, orbitZoom } from "./orbit.js";
import { connect, type Session } from "./session.js";
import {
  initialState,
  playbackSteps,
  setTimeStep,
  stepTime,
  toggleVariant,
  updateFps,
  PLAYBACK_HZ,
  type ViewerState,
} from "./state.js";

const WIDTH = 640;
const HEIGHT = 480;
const FOCAL = 700;
const DEFAULT_URL = `http://${location.hostname || "127.0.0.1"}:8321`;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const overlay = document.getElementById("overlay") as HTMLDivElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const bannerText = document.getElementById("banner-text") as HTMLSpanElement;
const retryButton = document.getElementById("retry") as HTMLButtonElement;
const playButton = document.getElementById("play") as HTMLButtonElement;
const scrubber = document.getElementById("scrubber") as HTMLInputElement;
const variantToggle = document.getElementById("variant") as HTMLInputElement;
const ctx = canvas.getContext("2d")!;

canvas.width = WIDTH;
canvas.height = HEIGHT;

let session: Session | null = null;
let state: ViewerState | null = null;
let lastFrameAt = 0;
let playClock = 0;

function issue(): void {
  if (!session || !state) return;
  session.request({
    world_from_camera: orbitPose(state.orbit),
    focal: FOCAL,
    width: WIDTH,
    height: HEIGHT,
    time_step: state.timeStep,
    variant: state.variant,
    quality: "raw",
  });
}

function blit(payload: Uint8Array): void {
  if (payload.length === WIDTH * HEIGHT * 3) {
    const img = ctx.createImageData(WIDTH, HEIGHT);
    for (let i = 0, j = 0; i < payload.length; i += 3, j += 4) {
      img.data[j] = payload[i]!;
      img.data[j + 1] = payload[i + 1]!;
      img.data[j + 2] = payload[i + 2]!;
      img.data[j + 3] = 255;
    }
    ctx.putImageData(img, 0, 0);
    return;
  }
  // Fallback for encoded payloads (png quality).
  void createImageBitmap(new Blob([payload.slice()])).then((bitmap) => {
    ctx.drawImage(bitmap, 0, 0);
    bitmap.close();
  });
}

function onFrame(reply: FrameReply): void {
  if (!state || !session) return;
  const now = performance.now();
  if (lastFrameAt > 0) state = updateFps(state, now - lastFrameAt);
  lastFrameAt = now;
  blit(reply.payload);
  overlay.textContent =
    `${state.fpsEstimate.toFixed(1)} fps | render ${(reply.renderMicros / 1000).toFixed(1)} ms` +
    ` | ${reply.colorEvals.toLocaleString()} colour evals` +
    ` | t=${state.timeStep}/${session.meta.T} | ${state.variant}`;
  scrubber.value = String(state.timeStep);
}

function showBanner(message: string): void {
  bannerText.textContent = message;
  banner.style.display = "flex";
}

async function establish(): Promise<void> {
  banner.style.display = "none";
  try {
    session = await connect(DEFAULT_URL, {
      onFrame,
      onServerError: (err) => showBanner(`server rejected request: ${err.error}`),
      onClose: () => showBanner("connection lost"),
    });
  } catch (err) {
    showBanner(`cannot reach render service at ${DEFAULT_URL}: ${String(err)}`);
    return;
  }
  state = initialState(session.meta);
  scrubber.max = String(session.meta.T - 1);
  scrubber.value = "0";
  lastFrameAt = 0;
  issue();
}

retryButton.addEventListener("click", () => void establish());

let dragging = false;
let lastX = 0;
let lastY = 0;

canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});

canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || !state) return;
  const dx = ev.clientX - lastX;
  const dy = ev.clientY - lastY;
  if (dx === 0 && dy === 0) return;
  lastX = ev.clientX;
  lastY = ev.clientY;
  state = { ...state, orbit: orbitDrag(state.orbit, dx, dy) };
  issue();
});

canvas.addEventListener("pointerup", (ev) => {
  dragging = false;
  canvas.releasePointerCapture(ev.pointerId);
});

canvas.addEventListener("wheel", (ev) => {
  if (!state) return;
  ev.preventDefault();
  if (ev.deltaY === 0) return;
  state = { ...state, orbit: orbitZoom(state.orbit, ev.deltaY) };
  issue();
});

scrubber.addEventListener("input", () => {
  if (!state || !session) return;
  state = { ...state, playing: false };
  state = setTimeStep(state, Number(scrubber.value), session.meta.T);
  syncPlayButton();
  issue();
});

function syncPlayButton(): void {
  playButton.textContent = state?.playing ? "Pause" : "Play";
}

function togglePlaying(): void {
  if (!state) return;
  state = { ...state, playing: !state.playing };
  playClock = performance.now();
  syncPlayButton();
}

playButton.addEventListener("click", togglePlaying);

window.addEventListener("keydown", (ev) => {
  if (ev.code === "Space") {
    ev.preventDefault();
    togglePlaying();
  }
});

variantToggle.addEventListener("change", () => {
  if (!state) return;
  state = toggleVariant(state);
  issue();
});

function animate(): void {
  requestAnimationFrame(animate);
  if (!state || !session || !state.playing || session.inFlight) return;
  const steps = playbackSteps(performance.now() - playClock);
  if (steps < 1) return;
  playClock += (steps * 1000) / PLAYBACK_HZ;
  state = stepTime(state, steps, session.meta.T);
  issue();
}

void establish();
animate();
