/**
 * Issuer Desk: centre registration, dose and test recording, issuance.
 *
 * Credentials are built and signed with the centre key held in this tab,
 * cross-checked by the node's validation endpoint, sealed to the citizen,
 * and anchored with a transaction signed here. The finished bundle is
 * then handed to the wallet.
 */

import {
  bundleToDoc,
  claimMap,
  issueDoseCredential,
  issueFullVaccination,
  issueTestCredential,
  type Bundle,
} from "../credentials.js";
import { keyFromDid, addressOf } from "../identity.js";
import { GatewayClient } from "../gateway.js";
import { Bus } from "./bus.js";
import { SessionKeys } from "./session.js";
import { clear, el, labelled, statusLine } from "./dom.js";

export function mountIssuerDesk(root: HTMLElement, gateway: GatewayClient, keys: SessionKeys, bus: Bus): void {
  const centre = keys.roleKey("centre");
  const issued: Bundle[] = [];

  root.append(el("h2", {}, ["Issuer Desk"]));
  root.append(
    el("p", { class: "identity" }, [`Centre ${centre.address}`]),
  );

  // registration
  const regSection = el("section", { class: "panel", "data-panel": "register" });
  regSection.append(el("h3", {}, ["Centre registration"]));
  const regButton = el("button", { id: "register-centre" }, ["Register this centre"]);
  regSection.append(regButton);
  const regStatus = statusLine(regSection);
  regButton.addEventListener("click", async () => {
    try {
      await gateway.addCentre(centre.address);
      const standing = await gateway.centreStanding(centre.address);
      regStatus(standing.whitelisted ? "Centre whitelisted" : "Registration pending", standing.whitelisted ? "ok" : "info");
    } catch (exc) {
      regStatus(String(exc), "err");
    }
  });
  root.append(regSection);

  // dose recording
  const doseSection = el("section", { class: "panel", "data-panel": "dose" });
  doseSection.append(el("h3", {}, ["Record a dose"]));
  const subjectInput = el("input", { id: "dose-subject", placeholder: "did:vax:…" });
  const productInput = el("input", { id: "dose-product", value: "CoronaShield" });
  const batchInput = el("input", { id: "dose-batch", value: "B-001" });
  const numberInput = el("input", { id: "dose-number", type: "number", value: "1", min: "1", max: "2" });
  const dateInput = el("input", { id: "dose-date", placeholder: "ms since epoch" });
  const doseButton = el("button", { id: "issue-dose" }, ["Issue dose credential"]);
  doseSection.append(
    labelled("Citizen", subjectInput),
    labelled("Product", productInput),
    labelled("Batch", batchInput),
    labelled("Dose number", numberInput),
    labelled("Administered at", dateInput),
    doseButton,
  );
  const doseStatus = statusLine(doseSection);
  root.append(doseSection);

  // test recording
  const testSection = el("section", { class: "panel", "data-panel": "test" });
  testSection.append(el("h3", {}, ["Record a test"]));
  const testSubject = el("input", { id: "test-subject", placeholder: "did:vax:…" });
  const testType = el("input", { id: "test-type", value: "PCR" });
  const testResult = el("input", { id: "test-result", value: "negative" });
  const testButton = el("button", { id: "issue-test" }, ["Issue test credential"]);
  testSection.append(labelled("Citizen", testSubject), labelled("Type", testType), labelled("Result", testResult), testButton);
  const testStatus = statusLine(testSection);
  root.append(testSection);

  // combination
  const fullSection = el("section", { class: "panel", "data-panel": "full" });
  fullSection.append(el("h3", {}, ["Combine into full vaccination"]));
  const fullButton = el("button", { id: "issue-full" }, ["Issue full vaccination"]);
  fullSection.append(fullButton);
  const fullStatus = statusLine(fullSection);
  root.append(fullSection);

  const ledgerList = el("ul", { id: "issued-credentials", class: "issued" });
  root.append(el("h3", {}, ["Issued this session"]), ledgerList);

  function recordIssued(bundle: Bundle): void {
    issued.push(bundle);
    const item = el("li", {}, [
      `${bundle.credential.type} ${bundle.credential.id} for ${bundle.credential.subject_did.slice(0, 24)}…`,
    ]);
    ledgerList.append(item);
  }

  async function sealAnchorDeliver(bundle: Bundle, status: (t: string, tone?: "ok" | "err" | "info") => void) {
    const doc = bundleToDoc(bundle);
    const valid = await gateway.validateBundle(
      bundle.credential.type === "DoseCredential" ? "dose" : bundle.credential.type === "TestCredential" ? "test" : "full",
      doc,
    );
    if (!valid) {
      status("node rejected the locally built credential", "err");
      return;
    }
    const cid = await gateway.sealAndStore(doc, bundle.credential.subject_did);
    const holderAddress = addressOf(keyFromDid(bundle.credential.subject_did));
    const receipt = await gateway.anchorCertificate(centre, holderAddress, cid);
    if (receipt.status !== "Applied") {
      status(`anchor reverted: ${receipt.revert_reason}`, "err");
      return;
    }
    bus.deliverCredential({ bundle: doc, cid });
    recordIssued(bundle);
    status(`Issued and anchored ${bundle.credential.id}`, "ok");
  }

  doseButton.addEventListener("click", async () => {
    try {
      const administered = dateInput.value ? Number(dateInput.value) : Date.now();
      const bundle = issueDoseCredential(
        centre,
        subjectInput.value.trim(),
        {
          vaccineProduct: productInput.value,
          batch: batchInput.value,
          doseNumber: Number(numberInput.value),
          administeredAt: administered,
          centreId: centre.address,
        },
        Date.now(),
      );
      await sealAnchorDeliver(bundle, doseStatus);
    } catch (exc) {
      doseStatus(String(exc), "err");
    }
  });

  testButton.addEventListener("click", async () => {
    try {
      const bundle = issueTestCredential(
        centre,
        testSubject.value.trim(),
        { testType: testType.value, result: testResult.value, sampledAt: Date.now() },
        Date.now(),
      );
      await sealAnchorDeliver(bundle, testStatus);
    } catch (exc) {
      testStatus(String(exc), "err");
    }
  });

  fullButton.addEventListener("click", async () => {
    try {
      const doses = issued.filter((b) => b.credential.type === "DoseCredential");
      const dose1 = doses.find((b) => claimMap(b).get("dose_number") === "1");
      const dose2 = doses.find((b) => claimMap(b).get("dose_number") === "2");
      if (!dose1 || !dose2) {
        fullStatus("need an issued dose 1 and dose 2 first", "err");
        return;
      }
      const bundle = issueFullVaccination(centre, dose1.credential.subject_did, dose1, dose2, Date.now());
      await sealAnchorDeliver(bundle, fullStatus);
    } catch (exc) {
      fullStatus(String(exc), "err");
    }
  });
}

export function resetPanel(root: HTMLElement): void {
  clear(root);
}
