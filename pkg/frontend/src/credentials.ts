/**
 * Client-side credential issuance for the Issuer Desk.
 *
 * The desk holds the centre's key, so credentials are built and signed
 * in the tab; the gateway's validation mode re-checks the result before
 * anything is anchored. Claim layouts mirror the gateway's issuance
 * rules field for field.
 */

import {
  b64urlDecode,
  b64urlEncode,
  bytesToHex,
  canonicalBytes,
  hexToBytes,
  randomBytes,
  type Json,
} from "./canonical.js";
import { sign, verifySignature, keyFromDid, type KeyPair } from "./identity.js";
import { commitClaims, foldPath, leafHash, rootHexOf, type Claim, type ClaimCommitment } from "./merkle.js";

export const TYPE_DOSE = "DoseCredential";
export const TYPE_TEST = "TestCredential";
export const TYPE_FULL = "FullVaccinationCredential";

const MS_PER_DAY = 86_400_000;
export const MIN_DOSE_INTERVAL_DAYS = 21;

export class CredentialError extends Error {}

export interface CredentialDoc {
  id: string;
  type: string;
  issuer_did: string;
  subject_did: string;
  issued_at: number;
  expires_at: number | null;
  commitment_root: string;
  disclosed_by_default: string[];
  issuer_signature: string;
}

export interface BundleDoc {
  credential: CredentialDoc;
  claims: { name: string; value: string; salt: string }[];
}

export interface Bundle {
  credential: CredentialDoc;
  commitments: ClaimCommitment[];
}

function signingDoc(credential: CredentialDoc): Record<string, Json> {
  // signature field excluded; key order is irrelevant, canonical bytes sort
  return {
    id: credential.id,
    type: credential.type,
    issuer_did: credential.issuer_did,
    subject_did: credential.subject_did,
    issued_at: credential.issued_at,
    expires_at: credential.expires_at,
    commitment_root: credential.commitment_root,
    disclosed_by_default: credential.disclosed_by_default,
  };
}

function issue(
  issuer: KeyPair,
  subjectDid: string,
  type: string,
  claims: Claim[],
  issuedAt: number,
  expiresAt: number | null,
  disclosedByDefault: string[],
): Bundle {
  keyFromDid(subjectDid); // fail early on a bad subject
  const commitments = commitClaims(claims);
  const credential: CredentialDoc = {
    id: "vc-" + bytesToHex(randomBytes(16)),
    type,
    issuer_did: issuer.did,
    subject_did: subjectDid,
    issued_at: issuedAt,
    expires_at: expiresAt,
    commitment_root: rootHexOf(commitments),
    disclosed_by_default: disclosedByDefault,
    issuer_signature: "",
  };
  const signature = sign(issuer.privateKey, canonicalBytes(signingDoc(credential)));
  credential.issuer_signature = bytesToHex(signature);
  return { credential, commitments };
}

export interface DoseInfo {
  vaccineProduct: string;
  batch: string;
  doseNumber: number;
  administeredAt: number;
  centreId: string;
}

export function issueDoseCredential(issuer: KeyPair, subjectDid: string, info: DoseInfo, nowMs: number): Bundle {
  if (info.doseNumber !== 1 && info.doseNumber !== 2) {
    throw new CredentialError(`dose_number must be 1 or 2, got ${info.doseNumber}`);
  }
  const claims: Claim[] = [
    { name: "vaccine_product", value: info.vaccineProduct },
    { name: "batch", value: info.batch },
    { name: "dose_number", value: String(info.doseNumber) },
    { name: "administered_at", value: String(info.administeredAt) },
    { name: "centre_id", value: info.centreId },
  ];
  return issue(issuer, subjectDid, TYPE_DOSE, claims, nowMs, null, ["dose_number"]);
}

export function claimMap(bundle: Bundle): Map<string, string> {
  return new Map(bundle.commitments.map((c) => [c.claim.name, c.claim.value]));
}

export interface TestInfo {
  testType: string;
  result: string;
  sampledAt: number;
}

export const TEST_VALIDITY_HOURS = 72;

export function issueTestCredential(issuer: KeyPair, subjectDid: string, info: TestInfo, nowMs: number): Bundle {
  if (info.sampledAt > nowMs) {
    throw new CredentialError(`sampled_at ${info.sampledAt} is after issuance time ${nowMs}`);
  }
  const claims: Claim[] = [
    { name: "test_type", value: info.testType },
    { name: "result", value: info.result },
    { name: "sampled_at", value: String(info.sampledAt) },
  ];
  const expires = info.sampledAt + TEST_VALIDITY_HOURS * 3_600_000;
  return issue(issuer, subjectDid, TYPE_TEST, claims, nowMs, expires, ["result"]);
}

export function issueFullVaccination(
  issuer: KeyPair,
  subjectDid: string,
  dose1: Bundle,
  dose2: Bundle,
  nowMs: number,
): Bundle {
  for (const [label, bundle] of [
    ["first", dose1],
    ["second", dose2],
  ] as const) {
    if (bundle.credential.type !== TYPE_DOSE) {
      throw new CredentialError(`${label} input is a ${bundle.credential.type}, not a ${TYPE_DOSE}`);
    }
    const { ok, reasons } = verifyBundle(bundle);
    if (!ok) {
      throw new CredentialError(`${label} dose credential fails checks: ${reasons.join("; ")}`);
    }
    if (bundle.credential.subject_did !== subjectDid) {
      throw new CredentialError(`${label} dose was issued to a different subject`);
    }
  }
  const byNumber = new Map([dose1, dose2].map((b) => [claimMap(b).get("dose_number"), b]));
  const first = byNumber.get("1");
  const second = byNumber.get("2");
  if (!first || !second) {
    throw new CredentialError("need dose numbers 1 and 2");
  }
  const t1 = Number(claimMap(first).get("administered_at"));
  const t2 = Number(claimMap(second).get("administered_at"));
  if (t2 - t1 < MIN_DOSE_INTERVAL_DAYS * MS_PER_DAY) {
    throw new CredentialError(`doses are too close together, need ${MIN_DOSE_INTERVAL_DAYS} days`);
  }
  const claims: Claim[] = [
    { name: "dose1_id", value: first.credential.id },
    { name: "dose1_root", value: first.credential.commitment_root },
    { name: "dose2_id", value: second.credential.id },
    { name: "dose2_root", value: second.credential.commitment_root },
    { name: "vaccine_product", value: claimMap(second).get("vaccine_product") ?? "" },
    { name: "completed_at", value: String(t2) },
  ];
  return issue(issuer, subjectDid, TYPE_FULL, claims, nowMs, null, ["vaccine_product"]);
}

/** Structure, signature, and commitment consistency; no ledger involved. */
export function verifyBundle(bundle: Bundle): { ok: boolean; reasons: string[] } {
  const reasons: string[] = [];
  const vc = bundle.credential;
  if (![TYPE_DOSE, TYPE_TEST, TYPE_FULL].includes(vc.type)) {
    reasons.push(`unknown credential type ${vc.type}`);
  }
  if (vc.expires_at !== null && vc.expires_at <= vc.issued_at) {
    reasons.push("expires_at must be after issued_at");
  }
  let issuerKey: Uint8Array | null = null;
  try {
    issuerKey = keyFromDid(vc.issuer_did);
  } catch (exc) {
    reasons.push(`issuer identifier does not resolve: ${exc}`);
  }
  if (issuerKey) {
    let signature: Uint8Array | null = null;
    try {
      signature = hexToBytes(vc.issuer_signature);
    } catch {
      reasons.push("issuer signature is not hex");
    }
    if (signature && !verifySignature(issuerKey, canonicalBytes(signingDoc(vc)), signature)) {
      reasons.push("issuer signature does not verify");
    }
  }
  if (bundle.commitments.length === 0) {
    reasons.push("bundle discloses no claims");
  } else {
    for (const c of bundle.commitments) {
      const expected = leafHash(c.claim.name, c.claim.value, c.salt);
      if (bytesToHex(expected) !== bytesToHex(c.leaf)) {
        reasons.push(`claim ${c.claim.name} does not match its commitment`);
      }
    }
    if (rootHexOf(bundle.commitments) !== vc.commitment_root) {
      reasons.push("claims do not fold to the signed commitment root");
    }
  }
  return { ok: reasons.length === 0, reasons };
}

export function bundleToDoc(bundle: Bundle): BundleDoc {
  return {
    credential: { ...bundle.credential },
    claims: bundle.commitments.map((c) => ({
      name: c.claim.name,
      value: c.claim.value,
      salt: b64urlEncode(c.salt),
    })),
  };
}

export function bundleFromDoc(doc: BundleDoc): Bundle {
  if (!doc || typeof doc !== "object" || !doc.credential || !Array.isArray(doc.claims)) {
    throw new CredentialError("malformed credential bundle");
  }
  const commitments: ClaimCommitment[] = doc.claims.map((entry) => {
    const salt = b64urlDecode(entry.salt);
    return {
      claim: { name: entry.name, value: entry.value },
      salt,
      leaf: leafHash(entry.name, entry.value, salt),
    };
  });
  return { credential: { ...doc.credential }, commitments };
}

export { foldPath };
