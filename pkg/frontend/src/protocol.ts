import { z } from "zod";

// Hard cap on requested viewport area; the server enforces the same bound.
export const MAX_PIXELS = 1 << 20;

export const REPLY_HEADER_BYTES = 12;

export const metaSchema = z.object({
  T: z.number().int().positive(),
  K_sigma: z.number().int().positive(),
  K_z: z.number().int().positive(),
  depth: z.number().int().positive(),
  encoding_flags: z.number().int().nonnegative(),
  bounds: z.object({
    half_extent: z.number().positive(),
    centers: z.array(z.tuple([z.number(), z.number(), z.number()])),
  }),
});

export type Meta = z.infer<typeof metaSchema>;

const baseRequestSchema = z
  .object({
    world_from_camera: z.array(z.number().finite()).length(16),
    focal: z.number().finite().positive(),
    width: z.number().int().positive(),
    height: z.number().int().positive(),
    time_step: z.number().int().nonnegative(),
    variant: z.enum(["as-loaded", "force-baseline"]),
    quality: z.enum(["png", "raw"]),
  })
  .strict()
  .refine((req) => req.width * req.height <= MAX_PIXELS, {
    message: `width*height exceeds ${MAX_PIXELS}`,
  });

export type FrameRequest = z.infer<typeof baseRequestSchema>;

/** Request validator bound to the loaded scene's frame count. */
export function frameRequestSchema(nFrames: number) {
  return baseRequestSchema.refine((req) => req.time_step < nFrames, {
    message: `time_step out of range [0, ${nFrames})`,
  });
}

export interface FrameReply {
  requestId: number;
  renderMicros: number;
  colorEvals: number;
  payload: Uint8Array;
}

/** Split a binary stream message into its header triple and pixel payload. */
export function parseReply(data: ArrayBuffer): FrameReply {
  if (data.byteLength < REPLY_HEADER_BYTES) {
    throw new Error(`reply shorter than its ${REPLY_HEADER_BYTES}-byte header`);
  }
  const view = new DataView(data);
  return {
    requestId: view.getUint32(0, true),
    renderMicros: view.getUint32(4, true),
    colorEvals: view.getUint32(8, true),
    payload: new Uint8Array(data, REPLY_HEADER_BYTES),
  };
}

export const errorFrameSchema = z.object({
  error: z.string(),
  request_id: z.number().int(),
});

export type ErrorFrame = z.infer<typeof errorFrameSchema>;

export function parseErrorFrame(text: string): ErrorFrame {
  return errorFrameSchema.parse(JSON.parse(text));
}
