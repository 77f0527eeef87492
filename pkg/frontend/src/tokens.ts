/**
 * Three-segment signed tokens, the wire format for challenges and
 * presentations: b64url(canonical header).b64url(canonical payload).
 * b64url(signature over the ASCII "header.payload").
 */

import {
  b64urlDecode,
  b64urlEncode,
  canonicalBytes,
  utf8Decode,
  type Json,
} from "./canonical.js";
import { keyFromDid, sign, verifySignature } from "./identity.js";

export const HEADER_CHALLENGE = { alg: "EdDSA", typ: "challenge" };
export const HEADER_PRESENTATION = { alg: "EdDSA", typ: "presentation" };
export const MAX_CHALLENGE_TTL_S = 300;

export class TokenError extends Error {}

export interface DecodedToken {
  header: Record<string, Json>;
  payload: Record<string, Json>;
  signingInput: Uint8Array;
  signature: Uint8Array;
}

export function encodeToken(
  header: Record<string, Json>,
  payload: Record<string, Json>,
  privateKey: Uint8Array,
): string {
  const h = b64urlEncode(canonicalBytes(header));
  const p = b64urlEncode(canonicalBytes(payload));
  const signature = sign(privateKey, new TextEncoder().encode(`${h}.${p}`));
  return `${h}.${p}.${b64urlEncode(signature)}`;
}

export function decodeToken(token: string): DecodedToken {
  const parts = token.split(".");
  if (parts.length !== 3) {
    throw new TokenError(`token must have 3 segments, got ${parts.length}`);
  }
  let header: unknown;
  let payload: unknown;
  let signature: Uint8Array;
  try {
    header = JSON.parse(utf8Decode(b64urlDecode(parts[0])));
    payload = JSON.parse(utf8Decode(b64urlDecode(parts[1])));
    signature = b64urlDecode(parts[2]);
  } catch (exc) {
    throw new TokenError(`undecodable token segment: ${exc}`);
  }
  if (typeof header !== "object" || header === null || Array.isArray(header)) {
    throw new TokenError("token segments must decode to objects");
  }
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new TokenError("token segments must decode to objects");
  }
  return {
    header: header as Record<string, Json>,
    payload: payload as Record<string, Json>,
    signingInput: new TextEncoder().encode(`${parts[0]}.${parts[1]}`),
    signature,
  };
}

export interface Challenge {
  verifierDid: string;
  nonce: string;
  requestedClaims: string[];
  requiredCredentialTypes: string[];
  callback: string;
  issuedAt: number;
  expiresAt: number;
  token: string;
}

export function parseChallenge(token: string): Challenge {
  const { header, payload } = decodeToken(token);
  if (header.typ !== "challenge") {
    throw new TokenError(`not a challenge token: typ=${JSON.stringify(header.typ)}`);
  }
  const p = payload as {
    verifier_did: string;
    nonce: string;
    requested_claims: string[];
    required_credential_types: string[];
    callback: string;
    issued_at: number;
    expires_at: number;
  };
  if (typeof p.verifier_did !== "string" || typeof p.nonce !== "string") {
    throw new TokenError("challenge payload is missing identity fields");
  }
  return {
    verifierDid: p.verifier_did,
    nonce: p.nonce,
    requestedClaims: [...(p.requested_claims ?? [])],
    requiredCredentialTypes: [...(p.required_credential_types ?? [])],
    callback: p.callback ?? "",
    issuedAt: Number(p.issued_at),
    expiresAt: Number(p.expires_at),
    token,
  };
}

export function challengeSignatureOk(token: string): boolean {
  try {
    const { payload, signingInput, signature } = decodeToken(token);
    const verifierDid = (payload as { verifier_did?: string }).verifier_did;
    if (typeof verifierDid !== "string") {
      return false;
    }
    return verifySignature(keyFromDid(verifierDid), signingInput, signature);
  } catch {
    return false;
  }
}

/**
 * Wallet-side gate before any disclosure decision: the challenge must be
 * signed by the verifier it names, still inside its window, the window
 * no longer than the protocol allows, and it must name a callback.
 */
export function holderValidateChallenge(
  token: string,
  nowMs: number,
): { ok: boolean; reasons: string[] } {
  if (!challengeSignatureOk(token)) {
    return { ok: false, reasons: ["challenge signature does not verify"] };
  }
  const challenge = parseChallenge(token);
  const reasons: string[] = [];
  if (nowMs >= challenge.expiresAt) {
    reasons.push("challenge has expired");
  }
  if (challenge.expiresAt - challenge.issuedAt > MAX_CHALLENGE_TTL_S * 1000) {
    reasons.push("challenge window is longer than allowed");
  }
  if (!challenge.callback) {
    reasons.push("challenge names no callback");
  }
  return { ok: reasons.length === 0, reasons };
}
