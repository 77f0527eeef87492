/**
 * Per-workspace key custody.
 *
 * Every key pair is generated inside the tab and stays there. The only
 * bytes derived from a private key that ever leave are signatures; the
 * session object deliberately has no export method for secrets.
 */

import { generateKeypair, type KeyPair } from "../identity.js";

export class SessionKeys {
  private keys = new Map<string, KeyPair>();

  /** Key for a named role, minted on first use. */
  roleKey(role: string): KeyPair {
    let key = this.keys.get(role);
    if (!key) {
      key = generateKeypair();
      this.keys.set(role, key);
    }
    return key;
  }

  /** Public half only; safe to show or send. */
  describe(role: string): { did: string; address: string } {
    const key = this.roleKey(role);
    return { did: key.did, address: key.address };
  }
}
