import { type Json } from "../src/canonical.js";
import { generateKeypair, type KeyPair } from "../src/identity.js";
import { encodeToken, HEADER_CHALLENGE } from "../src/tokens.js";

export async function waitFor(
  check: () => boolean,
  timeoutMs = 10_000,
  detail?: () => string,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  if (!check()) {
    throw new Error(`condition not met in time${detail ? `: ${detail()}` : ""}`);
  }
}

export const localVerifier: KeyPair = generateKeypair(new Uint8Array(32).fill(77));

export function mintLocalChallenge(overrides: Record<string, Json> = {}, signer: KeyPair = localVerifier): string {
  const now = Date.now();
  const payload: Record<string, Json> = {
    verifier_did: signer.did,
    nonce: "bm9uY2UtZml4ZWQtMTY",
    requested_claims: ["vaccine_product"],
    required_credential_types: ["FullVaccinationCredential"],
    callback: "http://127.0.0.1:1/presentations",
    issued_at: now,
    expires_at: now + 120_000,
    ...overrides,
  };
  return encodeToken(HEADER_CHALLENGE, payload, signer.privateKey);
}

export function click(node: Element): void {
  (node as HTMLElement).click();
}

export function setValue(node: Element, value: string): void {
  (node as HTMLInputElement | HTMLTextAreaElement).value = value;
}
