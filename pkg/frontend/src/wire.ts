/**
 * Binary joint-state frame codec, mirror of the server's wire format:
 *
 *   magic "JS" (2) | version u8 | seq u64 LE | timestamp f64 LE |
 *   q f64[5] LE | qdot f64[5] LE | crc32 u32 LE (over everything before it)
 *
 * 103 bytes total. Any mismatch throws DecodeError so callers can surface
 * protocol problems without dying.
 */

export const WIRE_MAGIC = 0x4a53; // "JS" big-endian pair
export const WIRE_VERSION = 1;
export const BODY_SIZE = 99;
export const WIRE_SIZE = BODY_SIZE + 4;
export const JOINTS = 5;

export interface JointStateMsg {
  seq: bigint;
  timestamp: number;
  q: Float64Array;
  qdot: Float64Array;
}

export class DecodeError extends Error {}

const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c;
}

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function encode(msg: JointStateMsg): Uint8Array {
  if (msg.q.length !== JOINTS || msg.qdot.length !== JOINTS) {
    throw new DecodeError(`q and qdot must have ${JOINTS} entries`);
  }
  const buf = new Uint8Array(WIRE_SIZE);
  const view = new DataView(buf.buffer);
  buf[0] = 0x4a; // J
  buf[1] = 0x53; // S
  buf[2] = WIRE_VERSION;
  view.setBigUint64(3, msg.seq, true);
  view.setFloat64(11, msg.timestamp, true);
  for (let j = 0; j < JOINTS; j++) {
    view.setFloat64(19 + 8 * j, msg.q[j], true);
    view.setFloat64(59 + 8 * j, msg.qdot[j], true);
  }
  view.setUint32(BODY_SIZE, crc32(buf.subarray(0, BODY_SIZE)), true);
  return buf;
}

export function decode(buf: Uint8Array): JointStateMsg {
  if (buf.length !== WIRE_SIZE) {
    throw new DecodeError(`frame must be ${WIRE_SIZE} bytes, got ${buf.length}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const stored = view.getUint32(BODY_SIZE, true);
  if (crc32(buf.subarray(0, BODY_SIZE)) !== stored) {
    throw new DecodeError("checksum mismatch");
  }
  if (buf[0] !== 0x4a || buf[1] !== 0x53) {
    throw new DecodeError(`bad magic 0x${buf[0].toString(16)}${buf[1].toString(16)}`);
  }
  if (buf[2] !== WIRE_VERSION) {
    throw new DecodeError(`unsupported version ${buf[2]}`);
  }
  const q = new Float64Array(JOINTS);
  const qdot = new Float64Array(JOINTS);
  for (let j = 0; j < JOINTS; j++) {
    q[j] = view.getFloat64(19 + 8 * j, true);
    qdot[j] = view.getFloat64(59 + 8 * j, true);
  }
  return {
    seq: view.getBigUint64(3, true),
    timestamp: view.getFloat64(11, true),
    q,
    qdot,
  };
}
