/**
 * Run-length codec for binary masks on the service wire.
 *
 * Format: "W,H;" then comma-separated run lengths over row-major pixels,
 * alternating starting with background; runs sum to W*H. The leading
 * background run may be 0 when the mask starts with foreground.
 * Must stay byte-compatible with the service's encoder.
 */

export interface DecodedMask {
  width: number;
  height: number;
  /** row-major, 1 = foreground */
  data: Uint8Array;
}

export function decodeRle(text: string): DecodedMask {
  const sep = text.indexOf(";");
  if (sep < 0) throw new Error(`malformed RLE: missing ';' in ${text.slice(0, 32)}`);
  const header = text.slice(0, sep);
  const body = text.slice(sep + 1);
  const dims = header.split(",");
  if (dims.length !== 2) throw new Error(`malformed RLE header: ${header}`);
  const width = Number(dims[0]);
  const height = Number(dims[1]);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 0 || height < 0) {
    throw new Error(`bad RLE dimensions: ${header}`);
  }
  const total = width * height;
  const data = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  if (body !== "") {
    for (const token of body.split(",")) {
      const run = Number(token);
      if (!Number.isInteger(run) || run < 0) throw new Error(`bad run length: ${token}`);
      if (value === 1) data.fill(1, pos, pos + run);
      pos += run;
      value = 1 - value;
    }
  }
  if (pos !== total) {
    throw new Error(`RLE runs sum to ${pos}, expected ${total} for ${width}x${height}`);
  }
  return { width, height, data };
}

export function encodeRle(mask: DecodedMask): string {
  const { width, height, data } = mask;
  const runs: number[] = [];
  let current = 0;
  let length = 0;
  for (let i = 0; i < data.length; i++) {
    const v = data[i] ? 1 : 0;
    if (v === current) {
      length++;
    } else {
      runs.push(length);
      current = v;
      length = 1;
    }
  }
  if (data.length > 0) runs.push(length);
  return `${width},${height};${runs.join(",")}`;
}
