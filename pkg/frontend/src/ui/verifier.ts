/**
 * Verifier Gate: mints challenges, shows them as QR, renders verdicts.
 *
 * The gate does no verification of its own. The checklist and banner come
 * straight from the report the callback returned; the JSON shown below
 * them is that response verbatim.
 */

import { GatewayClient, type ReportDoc } from "../gateway.js";
import { renderChallengeQr } from "../qr.js";
import { parseChallenge } from "../tokens.js";
import { Bus } from "./bus.js";
import { clear, el, labelled, statusLine } from "./dom.js";

export function mountVerifierGate(root: HTMLElement, gateway: GatewayClient, bus: Bus): void {
  root.append(el("h2", {}, ["Verifier Gate"]));

  const setup = el("section", { class: "panel", "data-panel": "challenge" });
  setup.append(el("h3", {}, ["New challenge"]));
  const claimsInput = el("input", { id: "gate-claims", value: "vaccine_product" });
  const typesInput = el("input", { id: "gate-types", value: "FullVaccinationCredential" });
  const mintButton = el("button", { id: "mint-challenge" }, ["Generate challenge QR"]);
  setup.append(
    labelled("Claims (comma separated)", claimsInput),
    labelled("Required credential types", typesInput),
    mintButton,
  );
  const mintStatus = statusLine(setup);
  const qrHost = el("div", { id: "challenge-qr" });
  setup.append(qrHost);
  root.append(setup);

  let qrTimer: ReturnType<typeof setInterval> | null = null;

  mintButton.addEventListener("click", async () => {
    try {
      const claims = claimsInput.value.split(",").map((s) => s.trim()).filter(Boolean);
      const types = typesInput.value.split(",").map((s) => s.trim()).filter(Boolean);
      const token = await gateway.newChallenge(claims, types, gateway.baseUrl + "/presentations");
      clear(qrHost);
      if (qrTimer !== null) {
        clearInterval(qrTimer);
        qrTimer = null;
      }

      const rendered = renderChallengeQr(token);
      if (rendered.kind === "payload-only") {
        qrHost.append(el("p", { class: "status info", id: "qr-fallback-notice" }, [rendered.notice]));
      } else {
        const frame = el("div", { class: "qr-frame" });
        frame.innerHTML = rendered.svg;
        qrHost.append(frame);
      }
      const payloadBox = el("textarea", { id: "challenge-payload", readonly: "" });
      payloadBox.value = rendered.payload;
      qrHost.append(labelled("Payload string", payloadBox));

      const expiry = el("p", { class: "countdown", id: "gate-countdown" });
      qrHost.append(expiry);
      const expiresAt = parseChallenge(token).expiresAt;
      const tick = () => {
        const left = expiresAt - Date.now();
        expiry.textContent = left > 0 ? `valid for ${Math.ceil(left / 1000)}s` : "expired";
      };
      tick();
      qrTimer = setInterval(tick, 1000);
      mintStatus("Challenge ready to scan", "ok");
    } catch (exc) {
      mintStatus(String(exc), "err");
    }
  });

  // verdict display
  const verdictSection = el("section", { class: "panel", "data-panel": "verdict" });
  verdictSection.append(el("h3", {}, ["Latest presentation"]));
  const banner = el("p", { id: "gate-banner", class: "banner" }, ["waiting"]);
  const checklist = el("ul", { id: "gate-checks", class: "checks" });
  const rawReport = el("pre", { id: "gate-report" });
  verdictSection.append(banner, checklist, el("h4", {}, ["Report"]), rawReport);
  root.append(verdictSection);

  function showReport(report: ReportDoc, raw: string): void {
    clear(checklist);
    for (const check of report.checks) {
      const row = el("li", { class: check.passed ? "check ok" : "check err", "data-check": check.name }, [
        `${check.passed ? "✓" : "✗"} ${check.name}: ${check.detail}`,
      ]);
      checklist.append(row);
    }
    banner.textContent = report.decision.accept ? "YES: entry allowed" : "NO: entry refused";
    banner.className = report.decision.accept ? "banner ok" : "banner err";
    rawReport.textContent = raw;
  }

  bus.onResult(({ report, raw }) => showReport(report, raw));
}
