/**
 * Citizen Wallet: credential shelf and challenge handling.
 *
 * A scanned challenge is checked against the verifier signature it
 * embeds before anything renders; a tampered token never gets a card,
 * only a red notice. The card counts down to expiry and the approve
 * button ships a presentation built entirely in the tab.
 */

import { bundleFromDoc, claimMap, type Bundle } from "../credentials.js";
import { GatewayClient } from "../gateway.js";
import { buildPresentation } from "../wallet.js";
import { challengeSignatureOk, parseChallenge, type Challenge } from "../tokens.js";
import { Bus } from "./bus.js";
import { SessionKeys } from "./session.js";
import { clear, el, labelled, statusLine } from "./dom.js";

interface Held {
  bundle: Bundle;
  cid: string;
}

export function mountWallet(root: HTMLElement, gateway: GatewayClient, keys: SessionKeys, bus: Bus): void {
  const holder = keys.roleKey("citizen");
  const held: Held[] = [];

  root.append(el("h2", {}, ["Citizen Wallet"]));
  root.append(el("p", { class: "identity", id: "wallet-did" }, [holder.did]));

  const shelf = el("ul", { id: "wallet-credentials", class: "shelf" });
  root.append(el("h3", {}, ["Credentials"]), shelf);

  bus.onCredential(({ bundle, cid }) => {
    const parsed = bundleFromDoc(bundle);
    if (parsed.credential.subject_did !== holder.did) return; // not ours
    held.push({ bundle: parsed, cid });
    shelf.append(
      el("li", {}, [`${parsed.credential.type} ${parsed.credential.id} (anchored at ${cid.slice(0, 12)}…)`]),
    );
  });

  // challenge intake
  const scanSection = el("section", { class: "panel", "data-panel": "scan" });
  scanSection.append(el("h3", {}, ["Scan a challenge"]));
  const scanInput = el("textarea", { id: "scan-input", placeholder: "paste the QR payload" });
  const scanButton = el("button", { id: "read-challenge" }, ["Read challenge"]);
  scanSection.append(labelled("QR payload", scanInput), scanButton);
  const scanStatus = statusLine(scanSection);
  const cardHost = el("div", { id: "challenge-card-host" });
  scanSection.append(cardHost);
  root.append(scanSection);

  let countdownTimer: ReturnType<typeof setInterval> | null = null;

  function renderCard(token: string): void {
    clear(cardHost);
    if (countdownTimer !== null) {
      clearInterval(countdownTimer);
      countdownTimer = null;
    }

    // signature gate: nothing from an unauthenticated token is rendered
    let challenge: Challenge;
    try {
      challenge = parseChallenge(token);
    } catch (exc) {
      cardHost.append(el("p", { class: "status err", id: "challenge-rejected" }, [`Unreadable challenge: ${exc}`]));
      return;
    }
    if (!challengeSignatureOk(token)) {
      cardHost.append(el("p", { class: "status err", id: "challenge-rejected" }, ["invalid signature"]));
      return;
    }

    const card = el("article", { class: "challenge-card", id: "challenge-card" });
    card.append(el("h4", {}, ["Disclosure request"]));
    card.append(el("p", {}, [`From ${challenge.verifierDid.slice(0, 28)}…`]));
    card.append(el("p", {}, [`Callback ${challenge.callback}`]));

    const countdown = el("p", { class: "countdown", id: "challenge-countdown" });
    card.append(countdown);

    const toggles = new Map<string, HTMLInputElement>();
    const wanted = el("ul", { class: "claims" });
    for (const name of challenge.requestedClaims) {
      const box = el("input", { type: "checkbox", "data-claim": name });
      box.checked = true;
      toggles.set(name, box);
      wanted.append(el("li", {}, [el("label", {}, [box, ` ${name}`])]));
    }
    card.append(el("p", {}, ["Requested claims:"]), wanted);

    const approve = el("button", { id: "approve-disclosure" }, ["Approve and present"]);
    const decline = el("button", { id: "decline-disclosure" }, ["Decline"]);
    card.append(approve, decline);
    const cardStatus = statusLine(card);

    const tick = () => {
      const left = challenge.expiresAt - Date.now();
      if (left <= 0) {
        countdown.textContent = "expired";
        countdown.classList.add("err");
        approve.disabled = true;
        if (countdownTimer !== null) {
          clearInterval(countdownTimer);
          countdownTimer = null;
        }
      } else {
        countdown.textContent = `expires in ${Math.ceil(left / 1000)}s`;
      }
    };
    tick();
    if (!approve.disabled) {
      countdownTimer = setInterval(tick, 1000);
    }

    approve.addEventListener("click", async () => {
      try {
        const presentable = held.filter(
          ({ bundle }) =>
            challenge.requiredCredentialTypes.length === 0 ||
            challenge.requiredCredentialTypes.includes(bundle.credential.type),
        );
        if (presentable.length === 0) {
          cardStatus("no credential in this wallet matches the request", "err");
          return;
        }
        const agreed = challenge.requestedClaims.filter((name) => toggles.get(name)?.checked);
        const disclose: Record<string, string[]> = {};
        const anchors: Record<string, string> = {};
        for (const { bundle, cid } of presentable) {
          anchors[bundle.credential.id] = cid;
          const names = agreed.filter((name) => claimMap(bundle).has(name));
          if (names.length > 0) disclose[bundle.credential.id] = names;
        }
        const presentation = buildPresentation(
          holder,
          token,
          presentable.map(({ bundle }) => bundle),
          disclose,
          anchors,
          Date.now(),
        );
        const { report, raw } = await gateway.deliverPresentation(challenge.callback, presentation);
        bus.deliverResult({ token: presentation, report, raw });
        cardStatus(report.decision.accept ? "Accepted" : `Rejected: ${report.reject_code}`, report.decision.accept ? "ok" : "err");
      } catch (exc) {
        cardStatus(String(exc), "err");
      }
    });

    decline.addEventListener("click", () => {
      clear(cardHost);
      scanStatus("Disclosure declined", "info");
    });

    cardHost.append(card);
  }

  scanButton.addEventListener("click", () => {
    const token = scanInput.value.trim();
    if (!token) {
      scanStatus("nothing to read", "err");
      return;
    }
    scanStatus("", "info");
    renderCard(token);
  });
}
