import { describe, expect, it } from "vitest";

import vectors from "./fixtures/parity.json";
import { decodeQr, matrixToRgba, renderChallengeQr } from "../src/qr.js";

describe("challenge QR", () => {
  it("round-trips a real challenge token byte for byte", () => {
    const rendered = renderChallengeQr(vectors.challenge_token);
    expect(rendered.kind).toBe("qr");
    if (rendered.kind !== "qr") return;
    const { data, width, height } = matrixToRgba(rendered.matrix);
    const decoded = decodeQr(data, width, height);
    expect(decoded).toBe(vectors.challenge_token);
  });

  it("also survives a token with every base64url character class", () => {
    const token = vectors.presentation_token;
    const rendered = renderChallengeQr(token);
    expect(rendered.kind).toBe("qr");
    if (rendered.kind !== "qr") return;
    const { data, width, height } = matrixToRgba(rendered.matrix, 3, 4);
    expect(decodeQr(data, width, height)).toBe(token);
  });

  it("renders an SVG with dark modules", () => {
    const rendered = renderChallengeQr("vax");
    expect(rendered.kind).toBe("qr");
    if (rendered.kind !== "qr") return;
    expect(rendered.svg).toContain("<svg");
    expect(rendered.svg).toContain('fill="#000"');
    expect(rendered.payload).toBe("vax");
  });

  it("falls back to a payload string when the token exceeds capacity", () => {
    // byte-mode capacity at the lowest correction level tops out at 2953
    const oversized = "x".repeat(2954);
    const rendered = renderChallengeQr(oversized);
    expect(rendered.kind).toBe("payload-only");
    if (rendered.kind !== "payload-only") return;
    expect(rendered.payload).toBe(oversized);
    expect(rendered.notice).toContain("too large");
  });

  it("stays a QR right at the capacity edge", () => {
    const edge = "x".repeat(2953);
    expect(renderChallengeQr(edge).kind).toBe("qr");
  });
});
