/**
 * In-tab message bus between the three workspaces.
 *
 * The console simulates three parties in one page, so hand-offs that
 * would normally travel by QR or callback URL are delivered as events.
 * Only material that would cross the wire in a real deployment may ride
 * the bus: credential bundles handed to their holder, and the verdict a
 * callback returned.
 */

import { type BundleDoc } from "../credentials.js";
import { type ReportDoc } from "../gateway.js";

export interface CredentialDelivery {
  bundle: BundleDoc;
  cid: string;
}

export interface PresentationResult {
  token: string;
  report: ReportDoc;
  /** response body exactly as the callback returned it */
  raw: string;
}

type Handler<T> = (message: T) => void;

export class Bus {
  private credentialHandlers: Handler<CredentialDelivery>[] = [];
  private resultHandlers: Handler<PresentationResult>[] = [];

  onCredential(handler: Handler<CredentialDelivery>): void {
    this.credentialHandlers.push(handler);
  }

  deliverCredential(message: CredentialDelivery): void {
    for (const handler of this.credentialHandlers) handler(message);
  }

  onResult(handler: Handler<PresentationResult>): void {
    this.resultHandlers.push(handler);
  }

  deliverResult(message: PresentationResult): void {
    for (const handler of this.resultHandlers) handler(message);
  }
}
