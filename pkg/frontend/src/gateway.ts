/**
 * Thin fetch client for the node gateway.
 *
 * Ledger transactions are assembled and signed here so centre keys stay
 * in the browser; the gateway only ever sees the finished signature.
 */

import { canonicalBytes, bytesToHex, type Json } from "./canonical.js";
import { sign, type KeyPair } from "./identity.js";
import { type BundleDoc } from "./credentials.js";

export class GatewayError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly body: unknown,
  ) {
    super(message);
  }
}

export interface TxDoc {
  kind: string;
  sender: string;
  payload: Record<string, Json>;
  nonce: number;
  public_key: string;
  signature: string;
}

export function buildSignedTx(signer: KeyPair, kind: string, payload: Record<string, Json>, nonce: number): TxDoc {
  const signingDoc: Json = {
    kind,
    sender: signer.address,
    payload,
    nonce,
    public_key: bytesToHex(signer.publicKey),
  };
  const signature = bytesToHex(sign(signer.privateKey, canonicalBytes(signingDoc)));
  return { kind, sender: signer.address, payload, nonce, public_key: bytesToHex(signer.publicKey), signature };
}

export interface ReceiptDoc {
  tx_hash: string;
  status: string;
  gas_used: number;
  block_height: number | null;
  revert_reason: string | null;
  [key: string]: unknown;
}

export interface CheckDoc {
  name: string;
  passed: boolean;
  detail: string;
}

export interface ReportDoc {
  checks: CheckDoc[];
  decision: { accept: boolean; basis: string | null; detail: string };
  reject_code: string | null;
}

export class GatewayClient {
  constructor(public readonly baseUrl: string) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = typeof body === "string" ? body : JSON.stringify(body);
    }
    const response = await fetch(this.baseUrl + path, init);
    const text = await response.text();
    let parsed: unknown = text;
    try {
      parsed = JSON.parse(text);
    } catch {
      // error bodies are JSON; a non-JSON body only shows up in the message
    }
    if (!response.ok) {
      const detail =
        parsed && typeof parsed === "object" && "detail" in (parsed as any) ? (parsed as any).detail : text;
      throw new GatewayError(`${method} ${path} failed (${response.status}): ${detail}`, response.status, parsed);
    }
    return parsed;
  }

  /** Whitelist a centre; the node owner signs server side. */
  addCentre(address: string): Promise<{ receipt: ReceiptDoc; next_nonce: number }> {
    return this.request("POST", "/centres", { address });
  }

  centreStanding(address: string): Promise<{ whitelisted: boolean; gas_used: number }> {
    return this.request("GET", `/centres/${address}`);
  }

  /** Ask the node to re-derive and check a locally built credential. */
  async validateBundle(kind: "dose" | "test" | "full", bundle: BundleDoc): Promise<boolean> {
    const out = await this.request("POST", `/credentials/${kind}`, { bundle });
    return out.valid === true;
  }

  /** Encrypt a bundle to its holder and store it; returns the content id. */
  async sealAndStore(bundle: BundleDoc, recipientDid: string): Promise<string> {
    const out = await this.request("POST", "/anchors", { bundle, recipient_did: recipientDid });
    return out.cid as string;
  }

  async nextNonce(senderAddress: string): Promise<number> {
    const out = await this.request("POST", "/anchors", { sender_address: senderAddress });
    return out.next_nonce as number;
  }

  async submitTx(tx: TxDoc): Promise<{ receipt: ReceiptDoc; next_nonce: number }> {
    const out = await this.request("POST", "/anchors", { tx });
    return { receipt: out.receipt, next_nonce: out.next_nonce };
  }

  /** Sign and submit an on-ledger anchor of a stored envelope. */
  async anchorCertificate(centre: KeyPair, holderAddress: string, cid: string): Promise<ReceiptDoc> {
    const nonce = await this.nextNonce(centre.address);
    const tx = buildSignedTx(centre, "AnchorCertificate", { holder: holderAddress, cid }, nonce);
    const { receipt } = await this.submitTx(tx);
    return receipt;
  }

  async anchorsOf(address: string): Promise<string[]> {
    const out = await this.request("GET", `/anchors/${address}`);
    return out.anchors as string[];
  }

  async newChallenge(requestedClaims: string[], requiredTypes: string[], callback: string): Promise<string> {
    const out = await this.request("POST", "/challenges", {
      requested_claims: requestedClaims,
      required_credential_types: requiredTypes,
      callback,
    });
    return out.token as string;
  }

  /** Deliver a presentation token to a callback and return the verdict.
   *
   * The raw response body rides along untouched so displays can show the
   * service's answer byte for byte rather than a re-serialization.
   */
  async deliverPresentation(callbackUrl: string, token: string): Promise<{ report: ReportDoc; raw: string }> {
    const response = await fetch(callbackUrl, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ token }),
    });
    const raw = await response.text();
    let body: unknown;
    try {
      body = JSON.parse(raw);
    } catch {
      throw new GatewayError(`presentation callback returned non-JSON (${response.status})`, response.status, raw);
    }
    if (!response.ok) {
      throw new GatewayError(`presentation delivery failed (${response.status})`, response.status, body);
    }
    return { report: body as ReportDoc, raw };
  }

  blocks(fromHeight = 0): Promise<{ height: number; blocks: unknown[] }> {
    return this.request("GET", `/ledger/blocks?from=${fromHeight}`);
  }
}
