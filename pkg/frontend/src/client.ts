/**
 * Preview service client: connects the WebSocket, decodes frames, keeps only
 * the latest one, and reconnects with backoff when the service drops.
 *
 * The socket is injected through a small factory interface so the client is
 * testable without a browser or a server.
 */

import {
  CommandAck,
  FrameMessage,
  PreviewCommand,
  decodeFrameMessage,
  serializeCommand,
} from "./protocol.js";
import { Backoff } from "./reconnect.js";

export type ConnectionState =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "closed";

export interface SocketLike {
  binaryType: string;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientEvents {
  onFrame?: (frame: FrameMessage) => void;
  onState?: (state: ConnectionState) => void;
  onAck?: (ack: CommandAck) => void;
}

export interface ClientStats {
  framesReceived: number;
  decodeErrors: number;
  reconnects: number;
}

export class PreviewClient {
  latestFrame: FrameMessage | null = null;
  state: ConnectionState = "closed";
  readonly stats: ClientStats = {
    framesReceived: 0,
    decodeErrors: 0,
    reconnects: 0,
  };

  private socket: SocketLike | null = null;
  private closedByUser = false;
  private readonly backoff = new Backoff();
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly events: ClientEvents = {},
    private readonly socketFactory: SocketFactory = (u) =>
      new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.open("connecting");
  }

  close(): void {
    this.closedByUser = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.socket?.close();
    this.socket = null;
    this.setState("closed");
  }

  /** Validate and send one command; returns false when not connected. */
  send(cmd: PreviewCommand): boolean {
    if (!this.socket || this.state !== "connected") {
      return false;
    }
    this.socket.send(serializeCommand(cmd));
    return true;
  }

  private open(initial: ConnectionState): void {
    this.setState(initial);
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      this.backoff.reset();
      this.setState("connected");
    };
    socket.onmessage = (event) => this.handleMessage(event.data);
    socket.onerror = () => socket.close();
    socket.onclose = () => {
      if (this.socket !== socket) {
        return; // superseded by a newer connection
      }
      this.socket = null;
      if (!this.closedByUser) {
        this.scheduleReconnect();
      }
    };
  }

  private scheduleReconnect(): void {
    this.setState("reconnecting");
    this.stats.reconnects += 1;
    const delay = this.backoff.nextDelay();
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.closedByUser) {
        this.open("reconnecting");
      }
    }, delay);
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      try {
        this.events.onAck?.(JSON.parse(data) as CommandAck);
      } catch {
        this.stats.decodeErrors += 1;
      }
      return;
    }
    if (!(data instanceof ArrayBuffer)) {
      this.stats.decodeErrors += 1;
      return;
    }
    try {
      const frame = decodeFrameMessage(data);
      // keep only the newest frame; the painter never falls behind
      this.latestFrame = frame;
      this.stats.framesReceived += 1;
      this.events.onFrame?.(frame);
    } catch {
      this.stats.decodeErrors += 1;
    }
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    this.events.onState?.(state);
  }
}
