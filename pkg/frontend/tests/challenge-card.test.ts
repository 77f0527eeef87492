/**
 * Wallet challenge handling, no network.
 *
 * The card must refuse to render anything from a token whose embedded
 * verifier signature fails, show a live countdown while valid, and lock
 * itself once expired.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { b64urlDecode, b64urlEncode } from "../src/canonical.js";
import { GatewayClient } from "../src/gateway.js";
import { Bus } from "../src/ui/bus.js";
import { SessionKeys } from "../src/ui/session.js";
import { mountWallet } from "../src/ui/walletView.js";
import { click, mintLocalChallenge, setValue, waitFor } from "./helpers.js";

let root: HTMLElement;

function scan(token: string): void {
  setValue(root.querySelector("#scan-input")!, token);
  click(root.querySelector("#read-challenge")!);
}

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
  root = document.getElementById("app")!;
  mountWallet(root, new GatewayClient("http://127.0.0.1:1"), new SessionKeys(), new Bus());
});

describe("challenge card", () => {
  it("renders toggles and a countdown for a well-signed challenge", () => {
    scan(mintLocalChallenge({ requested_claims: ["vaccine_product", "completed_at"] }));
    const card = root.querySelector("#challenge-card");
    expect(card).not.toBeNull();
    const toggles = [...root.querySelectorAll<HTMLInputElement>("input[data-claim]")];
    expect(toggles.map((t) => t.dataset.claim)).toEqual(["vaccine_product", "completed_at"]);
    expect(toggles.every((t) => t.checked)).toBe(true);
    expect(root.querySelector("#challenge-countdown")!.textContent).toMatch(/expires in \d+s/);
    expect(root.querySelector<HTMLButtonElement>("#approve-disclosure")!.disabled).toBe(false);
  });

  it("shows only a red signature notice for a tampered token", () => {
    const token = mintLocalChallenge();
    const [h, p, s] = token.split(".");
    const payload = JSON.parse(new TextDecoder().decode(b64urlDecode(p)));
    payload.callback = "http://evil.example/steal";
    const doctored = b64urlEncode(new TextEncoder().encode(JSON.stringify(payload)));
    scan([h, doctored, s].join("."));
    const notice = root.querySelector("#challenge-rejected");
    expect(notice).not.toBeNull();
    expect(notice!.textContent).toBe("invalid signature");
    expect(notice!.className).toContain("err");
    expect(root.querySelector("#challenge-card")).toBeNull();
    expect(root.querySelector("#approve-disclosure")).toBeNull();
  });

  it("marks an expired challenge and disables approval", () => {
    const now = Date.now();
    scan(mintLocalChallenge({ issued_at: now - 240_000, expires_at: now - 120_000 }));
    expect(root.querySelector("#challenge-countdown")!.textContent).toBe("expired");
    expect(root.querySelector<HTMLButtonElement>("#approve-disclosure")!.disabled).toBe(true);
  });

  it("counts down to expired while the card is open", async () => {
    const now = Date.now();
    scan(mintLocalChallenge({ expires_at: now + 1_100 }));
    expect(root.querySelector("#challenge-countdown")!.textContent).toMatch(/expires in [12]s/);
    await waitFor(() => root.querySelector("#challenge-countdown")!.textContent === "expired", 5_000);
    expect(root.querySelector<HTMLButtonElement>("#approve-disclosure")!.disabled).toBe(true);
  });

  it("clears the card on decline", () => {
    scan(mintLocalChallenge());
    click(root.querySelector("#decline-disclosure")!);
    expect(root.querySelector("#challenge-card")).toBeNull();
  });

  it("refuses to present when no held credential matches the request", async () => {
    scan(mintLocalChallenge());
    click(root.querySelector("#approve-disclosure")!);
    await waitFor(() => (root.querySelector("#challenge-card .status")?.textContent ?? "").length > 0);
    expect(root.querySelector("#challenge-card .status")!.textContent).toContain("no credential");
  });
});
