/**
 * Citizen Wallet core: holds credential bundles, answers challenges.
 *
 * The wallet builds presentation tokens locally so the holder key never
 * leaves the tab. Disclosure is per claim; everything not ticked stays a
 * salted commitment.
 */

import { b64urlEncode, bytesToHex, type Json } from "./canonical.js";
import { type KeyPair } from "./identity.js";
import { merklePath } from "./merkle.js";
import { type Bundle } from "./credentials.js";
import { encodeToken, holderValidateChallenge, parseChallenge, HEADER_PRESENTATION, TokenError } from "./tokens.js";

export class WalletError extends Error {}

export interface DisclosureChoice {
  /** credential id -> claim names the holder agreed to open */
  [credentialId: string]: string[];
}

export function buildPresentation(
  holder: KeyPair,
  challengeToken: string,
  bundles: Bundle[],
  disclose: DisclosureChoice,
  anchors: Record<string, string>,
  nowMs: number,
): string {
  const { ok, reasons } = holderValidateChallenge(challengeToken, nowMs);
  if (!ok) {
    throw new TokenError(reasons.join("; "));
  }
  const challenge = parseChallenge(challengeToken);

  const byId = new Map(bundles.map((b) => [b.credential.id, b]));
  const disclosures: Json[] = [];
  for (const credentialId of Object.keys(disclose).sort()) {
    const bundle = byId.get(credentialId);
    if (!bundle) {
      throw new WalletError(`no presented credential with id ${credentialId}`);
    }
    const leaves = bundle.commitments.map((c) => c.leaf);
    for (const name of [...disclose[credentialId]].sort()) {
      const index = bundle.commitments.findIndex((c) => c.claim.name === name);
      if (index < 0) {
        throw new WalletError(`credential ${credentialId} has no claim named ${name}`);
      }
      const commitment = bundle.commitments[index];
      const path = merklePath(leaves, index);
      disclosures.push({
        credential_id: credentialId,
        name,
        value: commitment.claim.value,
        salt: b64urlEncode(commitment.salt),
        audit_path: path.map(([sibling, side]) => ({ sibling: bytesToHex(sibling), side })),
      });
    }
  }

  const sortedAnchors: Record<string, Json> = {};
  for (const key of Object.keys(anchors).sort()) {
    sortedAnchors[key] = anchors[key];
  }
  const payload: Json = {
    holder_did: holder.did,
    challenge_nonce: challenge.nonce,
    credentials: bundles.map((b) => ({ ...b.credential })) as unknown as Json,
    anchors: sortedAnchors,
    disclosures,
    created_at: nowMs,
  };
  return encodeToken(HEADER_PRESENTATION, payload, holder.privateKey);
}
