/** Parser for the "SQNC v1" binary cloud format served by the backend. */

export interface Cloud {
  n: number;
  numClasses: number;
  positions: Float32Array; // length 3n, xyz interleaved
  colors: Uint8Array | null; // length 3n, rgb
  labels: Uint16Array | null; // length n
}

const MAGIC = 0x534e5143; // "SQNC" read as little-endian u32 of bytes C,Q,N,S

export function parseSqnc(buffer: ArrayBuffer): Cloud {
  const view = new DataView(buffer);
  if (buffer.byteLength < 16) {
    throw new Error(`SQNC: file shorter than header (${buffer.byteLength} bytes)`);
  }
  const magic = String.fromCharCode(
    view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3),
  );
  if (magic !== 'SQNC') {
    throw new Error(`SQNC: bad magic ${JSON.stringify(magic)}`);
  }
  const version = view.getUint8(4);
  if (version !== 1) {
    throw new Error(`SQNC: unsupported version ${version}`);
  }
  const flags = view.getUint8(5);
  const numClasses = view.getUint16(6, true);
  const nBig = view.getBigUint64(8, true);
  if (nBig > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new Error('SQNC: point count exceeds JS safe integers');
  }
  const n = Number(nBig);
  let offset = 16;

  const need = (bytes: number, what: string) => {
    if (offset + bytes > buffer.byteLength) {
      throw new Error(`SQNC: truncated ${what} payload at byte ${offset}`);
    }
  };

  need(n * 12, 'position');
  // copy out: the buffer offset may not be 4-aligned for a direct view
  const positions = new Float32Array(buffer.slice(offset, offset + n * 12));
  offset += n * 12;

  let colors: Uint8Array | null = null;
  if (flags & 0x01) {
    need(n * 3, 'color');
    colors = new Uint8Array(buffer.slice(offset, offset + n * 3));
    offset += n * 3;
  }
  let labels: Uint16Array | null = null;
  if (flags & 0x02) {
    need(n * 2, 'label');
    labels = new Uint16Array(buffer.slice(offset, offset + n * 2));
    offset += n * 2;
  }
  return { n, numClasses, positions, colors, labels };
}

/** Serializer used by tests to fabricate service payloads. */
export function writeSqnc(cloud: Cloud): ArrayBuffer {
  const size =
    16 + cloud.n * 12 + (cloud.colors ? cloud.n * 3 : 0) + (cloud.labels ? cloud.n * 2 : 0);
  const buffer = new ArrayBuffer(size);
  const view = new DataView(buffer);
  const bytes = new Uint8Array(buffer);
  bytes.set([0x53, 0x51, 0x4e, 0x43], 0); // "SQNC"
  view.setUint8(4, 1);
  view.setUint8(5, (cloud.colors ? 1 : 0) | (cloud.labels ? 2 : 0));
  view.setUint16(6, cloud.numClasses, true);
  view.setBigUint64(8, BigInt(cloud.n), true);
  let offset = 16;
  new Uint8Array(buffer, offset, cloud.n * 12).set(new Uint8Array(cloud.positions.buffer.slice(0, cloud.n * 12)));
  offset += cloud.n * 12;
  if (cloud.colors) {
    bytes.set(cloud.colors.subarray(0, cloud.n * 3), offset);
    offset += cloud.n * 3;
  }
  if (cloud.labels) {
    new Uint8Array(buffer, offset, cloud.n * 2).set(
      new Uint8Array(cloud.labels.buffer.slice(0, cloud.n * 2)),
    );
  }
  return buffer;
}
