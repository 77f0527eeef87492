/**
 * Console shell: three workspaces over one gateway.
 *
 * One page simulates issuer, citizen, and verifier so the whole
 * issue-hold-present loop can be walked without three devices. Keys for
 * each role are generated in the tab and never serialized out of it.
 */

import { GatewayClient } from "../gateway.js";
import { Bus } from "./bus.js";
import { SessionKeys } from "./session.js";
import { el } from "./dom.js";
import { mountIssuerDesk } from "./issuer.js";
import { mountWallet } from "./walletView.js";
import { mountVerifierGate } from "./verifier.js";

export interface Console {
  root: HTMLElement;
  gateway: GatewayClient;
  show(tab: "issuer" | "wallet" | "verifier"): void;
}

export function mountConsole(root: HTMLElement, gatewayUrl: string, keys = new SessionKeys()): Console {
  const gateway = new GatewayClient(gatewayUrl.replace(/\/$/, ""));
  const bus = new Bus();

  const nav = el("nav", { class: "tabs" });
  const panes: Record<string, HTMLElement> = {
    issuer: el("main", { id: "issuer-desk", class: "workspace" }),
    wallet: el("main", { id: "citizen-wallet", class: "workspace hidden" }),
    verifier: el("main", { id: "verifier-gate", class: "workspace hidden" }),
  };

  function show(tab: "issuer" | "wallet" | "verifier"): void {
    for (const [name, pane] of Object.entries(panes)) {
      pane.classList.toggle("hidden", name !== tab);
    }
    for (const button of nav.querySelectorAll("button")) {
      button.classList.toggle("active", button.dataset.tab === tab);
    }
  }

  for (const [tab, label] of [
    ["issuer", "Issuer Desk"],
    ["wallet", "Citizen Wallet"],
    ["verifier", "Verifier Gate"],
  ] as const) {
    const button = el("button", { "data-tab": tab }, [label]);
    button.addEventListener("click", () => show(tab));
    nav.append(button);
  }

  root.append(el("h1", {}, ["Certificate Console"]), nav, panes.issuer, panes.wallet, panes.verifier);

  mountIssuerDesk(panes.issuer, gateway, keys, bus);
  mountWallet(panes.wallet, gateway, keys, bus);
  mountVerifierGate(panes.verifier, gateway, bus);
  show("issuer");

  return { root, gateway, show };
}
