/**
 * Canonical JSON bytes shared with the gateway.
 *
 * Everything hashed or signed on either side goes through the same
 * encoding: object keys sorted, compact separators, raw UTF-8, integers
 * beyond 2^53 rendered as decimal strings. Non-integer numbers have no
 * canonical form and are rejected.
 */

import { sha256 } from "@noble/hashes/sha2.js";

export const SAFE_INT_BOUND = 9007199254740992; // 2^53

export class EncodingError extends Error {}

type Json = null | boolean | number | bigint | string | Json[] | { [key: string]: Json };

function normalize(value: Json): unknown {
  if (value === null || typeof value === "boolean" || typeof value === "string") {
    return value;
  }
  if (typeof value === "bigint") {
    const abs = value < 0n ? -value : value;
    return abs > BigInt(SAFE_INT_BOUND) ? value.toString() : Number(value);
  }
  if (typeof value === "number") {
    if (!Number.isInteger(value)) {
      throw new EncodingError("non-integer numbers have no canonical form");
    }
    return Math.abs(value) > SAFE_INT_BOUND ? value.toString() : value;
  }
  if (Array.isArray(value)) {
    return value.map(normalize);
  }
  if (typeof value === "object") {
    const out: { [key: string]: unknown } = {};
    for (const key of Object.keys(value).sort()) {
      out[key] = normalize(value[key]);
    }
    return out;
  }
  throw new EncodingError(`cannot canonically encode ${typeof value}`);
}

export function canonicalStringify(value: Json): string {
  // sorted insertion order above makes JSON.stringify deterministic
  return JSON.stringify(normalize(value));
}

export function canonicalBytes(value: Json): Uint8Array {
  return new TextEncoder().encode(canonicalStringify(value));
}

export function sha256Bytes(data: Uint8Array): Uint8Array {
  return sha256(data);
}

export function sha256Hex(data: Uint8Array): string {
  return bytesToHex(sha256(data));
}

export function hashCanonical(value: Json): string {
  return sha256Hex(canonicalBytes(value));
}

export function randomBytes(n: number): Uint8Array {
  const out = new Uint8Array(n);
  crypto.getRandomValues(out);
  return out;
}

export function bytesToHex(data: Uint8Array): string {
  let out = "";
  for (const byte of data) {
    out += byte.toString(16).padStart(2, "0");
  }
  return out;
}

export function hexToBytes(text: string): Uint8Array {
  if (text.length % 2 !== 0 || /[^0-9a-f]/.test(text)) {
    throw new EncodingError(`not lowercase hex: ${text.slice(0, 16)}`);
  }
  const out = new Uint8Array(text.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(text.slice(i * 2, i * 2 + 2), 16);
  }
  return out;
}

export function b64urlEncode(data: Uint8Array): string {
  let binary = "";
  for (const byte of data) {
    binary += String.fromCharCode(byte);
  }
  return btoa(binary).replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
}

export function b64urlDecode(text: string): Uint8Array {
  const padded = text.replace(/-/g, "+").replace(/_/g, "/") + "=".repeat((4 - (text.length % 4)) % 4);
  const binary = atob(padded);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    out[i] = binary.charCodeAt(i);
  }
  return out;
}

export function utf8Decode(data: Uint8Array): string {
  return new TextDecoder("utf-8", { fatal: true }).decode(data);
}

export type { Json };
