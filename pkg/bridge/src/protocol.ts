/**
 * Wire protocol: line-delimited JSON over stdin/stdout, one object per line.
 *
 * On startup the adapter emits `{"ready": true, "classes": K}`. Each request
 * carries an id, image dimensions, and base64 samples; the reply echoes the
 * id with a label below K. Requests are handled strictly serially.
 */

export interface ClassifyRequest {
  id: number;
  width: number;
  height: number;
  channels: number;
  pixels: Buffer;
}

export interface RawImage {
  width: number;
  height: number;
  channels: number;
  pixels: Buffer;
}

export class RequestError extends Error {
  /** id to echo in the error reply, when one could be recovered */
  readonly requestId: number | undefined;

  constructor(message: string, requestId?: number) {
    super(message);
    this.requestId = requestId;
  }
}

function isNonNegativeInt(value: unknown): value is number {
  return typeof value === "number" && Number.isInteger(value) && value >= 0;
}

/** Parse and validate one request line. Throws RequestError on any defect. */
export function parseRequest(line: string): ClassifyRequest {
  let message: unknown;
  try {
    message = JSON.parse(line);
  } catch {
    throw new RequestError("request is not valid JSON");
  }
  if (typeof message !== "object" || message === null || Array.isArray(message)) {
    throw new RequestError("request is not an object");
  }
  const record = message as Record<string, unknown>;
  const id = isNonNegativeInt(record.id) ? record.id : undefined;
  if (id === undefined) {
    throw new RequestError("request has no usable id");
  }
  for (const field of ["width", "height", "channels"] as const) {
    if (!isNonNegativeInt(record[field]) || (record[field] as number) < 1) {
      throw new RequestError(`bad ${field}`, id);
    }
  }
  if (typeof record.pixels !== "string") {
    throw new RequestError("pixels must be a base64 string", id);
  }
  const width = record.width as number;
  const height = record.height as number;
  const channels = record.channels as number;
  const pixels = Buffer.from(record.pixels, "base64");
  if (pixels.length !== width * height * channels) {
    throw new RequestError(
      `pixel payload holds ${pixels.length} bytes, expected ${width * height * channels}`,
      id,
    );
  }
  return { id, width, height, channels, pixels };
}

export function readyLine(classes: number): string {
  return JSON.stringify({ ready: true, classes });
}

export function labelLine(id: number, label: number): string {
  return JSON.stringify({ id, label });
}

export function errorLine(id: number, error: string): string {
  return JSON.stringify({ id, error });
}
