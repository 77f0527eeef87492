/**
 * Challenge tokens as QR codes, and back.
 *
 * The QR carries the token string byte for byte: no wrapper, no URL
 * scheme, so any scanner hands the wallet exactly what the verifier
 * minted. Tokens past the symbol capacity fall back to a copyable
 * payload string with a visible notice.
 */

import QRCode from "qrcode";
import jsQR from "jsqr";

export interface QrMatrix {
  size: number;
  /** row-major module flags, 1 = dark */
  get(row: number, col: number): boolean;
}

export interface QrRender {
  kind: "qr";
  payload: string;
  matrix: QrMatrix;
  svg: string;
}

export interface PayloadOnlyRender {
  kind: "payload-only";
  payload: string;
  notice: string;
}

export type ChallengeRender = QrRender | PayloadOnlyRender;

function matrixOf(qr: ReturnType<typeof QRCode.create>): QrMatrix {
  const modules = qr.modules;
  return {
    size: modules.size,
    get: (row, col) => Boolean(modules.get(row, col)),
  };
}

function svgOf(matrix: QrMatrix, margin = 4): string {
  const dim = matrix.size + 2 * margin;
  const cells: string[] = [];
  for (let row = 0; row < matrix.size; row++) {
    for (let col = 0; col < matrix.size; col++) {
      if (matrix.get(row, col)) {
        cells.push(`M${col + margin} ${row + margin}h1v1h-1z`);
      }
    }
  }
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${dim} ${dim}" shape-rendering="crispEdges">` +
    `<rect width="${dim}" height="${dim}" fill="#fff"/>` +
    `<path d="${cells.join("")}" fill="#000"/></svg>`
  );
}

export function renderChallengeQr(token: string): ChallengeRender {
  let qr: ReturnType<typeof QRCode.create>;
  try {
    qr = QRCode.create(token, { errorCorrectionLevel: "L" });
  } catch {
    return {
      kind: "payload-only",
      payload: token,
      notice: "This challenge is too large for a QR code. Copy the payload string instead.",
    };
  }
  const matrix = matrixOf(qr);
  return { kind: "qr", payload: token, matrix, svg: svgOf(matrix) };
}

/** Rasterize for scanners that want pixels; quiet zone included. */
export function matrixToRgba(
  matrix: QrMatrix,
  scale = 4,
  margin = 4,
): { data: Uint8ClampedArray; width: number; height: number } {
  const dim = (matrix.size + 2 * margin) * scale;
  const data = new Uint8ClampedArray(dim * dim * 4).fill(255);
  for (let row = 0; row < matrix.size; row++) {
    for (let col = 0; col < matrix.size; col++) {
      if (!matrix.get(row, col)) continue;
      for (let dy = 0; dy < scale; dy++) {
        const base = ((row + margin) * scale + dy) * dim + (col + margin) * scale;
        for (let dx = 0; dx < scale; dx++) {
          const px = (base + dx) * 4;
          data[px] = 0;
          data[px + 1] = 0;
          data[px + 2] = 0;
        }
      }
    }
  }
  return { data, width: dim, height: dim };
}

/** Decode a scanned frame back to the token string, or null. */
export function decodeQr(data: Uint8ClampedArray, width: number, height: number): string | null {
  const hit = jsQR(data, width, height);
  return hit ? hit.data : null;
}
