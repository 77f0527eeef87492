/**
 * Salted claim commitments and the audit paths that open them.
 *
 * Leaf layout and tree shape must match the gateway exactly or every
 * disclosure proof dies at the verifier: leaves are sorted by claim
 * name, an odd node pairs with itself, and path sides are recorded from
 * the prover's point of view.
 */

import { b64urlEncode, bytesToHex, randomBytes, sha256Bytes } from "./canonical.js";

const CLAIM_SEPARATOR = "\x1f";
export const SALT_LEN = 16;

export class MerkleError extends Error {}

export interface Claim {
  name: string;
  value: string;
}

export interface ClaimCommitment {
  claim: Claim;
  salt: Uint8Array;
  leaf: Uint8Array;
}

export type PathStep = [sibling: Uint8Array, side: "L" | "R"];

export function leafHash(name: string, value: string, salt: Uint8Array): Uint8Array {
  if (salt.length !== SALT_LEN) {
    throw new MerkleError(`salt must be ${SALT_LEN} bytes`);
  }
  const material = [name, value, b64urlEncode(salt)].join(CLAIM_SEPARATOR);
  return sha256Bytes(new TextEncoder().encode(material));
}

function concatHash(left: Uint8Array, right: Uint8Array): Uint8Array {
  const joined = new Uint8Array(left.length + right.length);
  joined.set(left, 0);
  joined.set(right, left.length);
  return sha256Bytes(joined);
}

export function merkleRoot(leaves: Uint8Array[]): Uint8Array {
  if (leaves.length === 0) {
    throw new MerkleError("cannot build a tree with no leaves");
  }
  let level = leaves.slice();
  while (level.length > 1) {
    if (level.length % 2 === 1) {
      level.push(level[level.length - 1]);
    }
    const next: Uint8Array[] = [];
    for (let i = 0; i < level.length; i += 2) {
      next.push(concatHash(level[i], level[i + 1]));
    }
    level = next;
  }
  return level[0];
}

export function merklePath(leaves: Uint8Array[], index: number): PathStep[] {
  if (index < 0 || index >= leaves.length) {
    throw new MerkleError(`no leaf at index ${index}`);
  }
  const path: PathStep[] = [];
  let level = leaves.slice();
  let position = index;
  while (level.length > 1) {
    if (level.length % 2 === 1) {
      level.push(level[level.length - 1]);
    }
    const sibling = position % 2 === 1 ? position - 1 : position + 1;
    path.push([level[sibling], sibling < position ? "L" : "R"]);
    const next: Uint8Array[] = [];
    for (let i = 0; i < level.length; i += 2) {
      next.push(concatHash(level[i], level[i + 1]));
    }
    level = next;
    position = Math.floor(position / 2);
  }
  return path;
}

export function foldPath(leaf: Uint8Array, path: PathStep[]): Uint8Array {
  let node = leaf;
  for (const [sibling, side] of path) {
    node = side === "L" ? concatHash(sibling, node) : concatHash(node, sibling);
  }
  return node;
}

/** Commit claims with fresh random salts, sorted into leaf order. */
export function commitClaims(claims: Claim[], salts?: Uint8Array[]): ClaimCommitment[] {
  const names = claims.map((c) => c.name);
  if (new Set(names).size !== names.length) {
    throw new MerkleError("duplicate claim names");
  }
  const paired = claims.map((claim, i) => ({ claim, salt: salts?.[i] ?? randomBytes(SALT_LEN) }));
  paired.sort((a, b) => (a.claim.name < b.claim.name ? -1 : 1));
  return paired.map(({ claim, salt }) => ({
    claim,
    salt,
    leaf: leafHash(claim.name, claim.value, salt),
  }));
}

export function rootHexOf(commitments: ClaimCommitment[]): string {
  return bytesToHex(merkleRoot(commitments.map((c) => c.leaf)));
}
