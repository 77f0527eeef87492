/**
 * Client-side keys. Generated in the tab, kept in the tab; only
 * signatures and public identifiers ever go over the wire.
 */

import { ed25519 } from "@noble/curves/ed25519.js";

import { bytesToHex, hexToBytes, randomBytes, sha256Bytes } from "./canonical.js";

export const DID_METHOD = "vax";
const ADDRESS_BYTES = 20;

export class IdentityError extends Error {}

export interface KeyPair {
  /** 32-byte Ed25519 seed */
  privateKey: Uint8Array;
  publicKey: Uint8Array;
  did: string;
  address: string;
}

export function generateKeypair(seed?: Uint8Array): KeyPair {
  const material = seed ?? randomBytes(32);
  if (material.length !== 32) {
    throw new IdentityError("seed must be 32 bytes");
  }
  const publicKey = ed25519.getPublicKey(material);
  return {
    privateKey: material,
    publicKey,
    did: didFromKey(publicKey),
    address: addressOf(publicKey),
  };
}

export function addressOf(publicKey: Uint8Array): string {
  return "0x" + bytesToHex(sha256Bytes(publicKey).slice(0, ADDRESS_BYTES));
}

export function didFromKey(publicKey: Uint8Array): string {
  return `did:${DID_METHOD}:${bytesToHex(publicKey)}`;
}

export function keyFromDid(did: string): Uint8Array {
  const match = /^did:([a-z0-9]+):([0-9a-f]{64})$/.exec(did);
  if (!match) {
    throw new IdentityError(`not a resolvable identifier: ${did}`);
  }
  if (match[1] !== DID_METHOD) {
    throw new IdentityError(`unknown method ${match[1]}`);
  }
  return hexToBytes(match[2]);
}

export function sign(privateKey: Uint8Array, message: Uint8Array): Uint8Array {
  return ed25519.sign(message, privateKey);
}

export function verifySignature(publicKey: Uint8Array, message: Uint8Array, signature: Uint8Array): boolean {
  try {
    return ed25519.verify(signature, message, publicKey);
  } catch {
    return false;
  }
}
