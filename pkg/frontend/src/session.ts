import {
  frameRequestSchema,
  metaSchema,
  parseErrorFrame,
  parseReply,
  type ErrorFrame,
  type FrameReply,
  type FrameRequest,
  type Meta,
} from "./protocol.js";

/** The subset of the WebSocket surface the session uses; lets tests and
 * node clients substitute their own implementation. */
export interface SocketLike {
  binaryType: string;
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export interface SessionHandlers {
  onFrame: (reply: FrameReply, request: FrameRequest) => void;
  onServerError?: (error: ErrorFrame, request: FrameRequest) => void;
  onClose?: () => void;
}

export interface SessionDeps {
  fetchFn?: typeof fetch;
  makeSocket?: (url: string) => SocketLike;
}

export function metaUrl(baseUrl: string): string {
  return baseUrl.replace(/\/$/, "") + "/meta";
}

export function streamUrl(baseUrl: string): string {
  return baseUrl.replace(/\/$/, "").replace(/^http/, "ws") + "/stream";
}

function asBinaryOrText(data: unknown): ArrayBuffer | string {
  if (typeof data === "string") return data;
  if (data instanceof ArrayBuffer) return data;
  if (ArrayBuffer.isView(data)) {
    const copy = new Uint8Array(data.byteLength);
    copy.set(new Uint8Array(data.buffer, data.byteOffset, data.byteLength));
    return copy.buffer;
  }
  throw new Error("unsupported websocket message payload");
}

/**
 * One /stream connection with an in-flight budget of a single request.
 *
 * A request issued while another is unanswered is stashed (overwriting
 * any earlier stash), then sent when the reply or error frame settles the
 * connection: the newest state always wins and the server never sees a
 * queue it would have to coalesce.
 */
export class Session {
  readonly meta: Meta;
  private readonly socket: SocketLike;
  private readonly handlers: SessionHandlers;
  private readonly validate: ReturnType<typeof frameRequestSchema>;
  private inFlightRequest: FrameRequest | null = null;
  private pending: FrameRequest | null = null;
  private closed = false;

  constructor(meta: Meta, socket: SocketLike, handlers: SessionHandlers) {
    this.meta = meta;
    this.socket = socket;
    this.handlers = handlers;
    this.validate = frameRequestSchema(meta.T);
    socket.onmessage = (ev) => this.receive(ev.data);
    socket.onclose = () => {
      this.closed = true;
      handlers.onClose?.();
    };
  }

  get inFlight(): boolean {
    return this.inFlightRequest !== null;
  }

  /** Validate and send, or stash as the newest pending request. */
  request(req: FrameRequest): void {
    if (this.closed) throw new Error("session is closed");
    const checked = this.validate.parse(req);
    if (this.inFlightRequest) {
      this.pending = checked;
      return;
    }
    this.transmit(checked);
  }

  close(): void {
    this.closed = true;
    this.socket.close();
  }

  private transmit(req: FrameRequest): void {
    this.inFlightRequest = req;
    this.socket.send(JSON.stringify(req));
  }

  private settle(): FrameRequest {
    const settled = this.inFlightRequest;
    this.inFlightRequest = null;
    if (this.pending) {
      const next = this.pending;
      this.pending = null;
      this.transmit(next);
    }
    if (!settled) throw new Error("reply without an in-flight request");
    return settled;
  }

  private receive(data: unknown): void {
    const message = asBinaryOrText(data);
    if (typeof message === "string") {
      const error = parseErrorFrame(message);
      const request = this.settle();
      this.handlers.onServerError?.(error, request);
      return;
    }
    const reply = parseReply(message);
    const request = this.settle();
    this.handlers.onFrame(reply, request);
  }
}

function defaultSocket(url: string): SocketLike {
  return new WebSocket(url) as unknown as SocketLike;
}

/** Fetch /meta, open /stream, and resolve once the socket is usable. */
export async function connect(
  baseUrl: string,
  handlers: SessionHandlers,
  deps: SessionDeps = {},
): Promise<Session> {
  const fetchFn = deps.fetchFn ?? fetch;
  const response = await fetchFn(metaUrl(baseUrl));
  if (!response.ok) {
    throw new Error(`meta request failed: ${response.status}`);
  }
  const meta = metaSchema.parse(await response.json());

  const makeSocket = deps.makeSocket ?? defaultSocket;
  const socket = makeSocket(streamUrl(baseUrl));
  socket.binaryType = "arraybuffer";
  await new Promise<void>((resolve, reject) => {
    socket.onopen = () => resolve();
    socket.onerror = (ev) => reject(ev instanceof Error ? ev : new Error("websocket failed"));
  });
  socket.onerror = null;
  return new Session(meta, socket, handlers);
}
