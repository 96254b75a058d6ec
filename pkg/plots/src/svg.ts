/**
 * Deterministic SVG scene builder: identical input produces identical
 * bytes (fixed float formatting, no timestamps).
 */

export interface Line {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  stroke: string;
  width?: number;
  dash?: string;
}

export interface Label {
  x: number;
  y: number;
  text: string;
  size?: number;
  anchor?: string;
}

export interface Marker {
  x: number;
  y: number;
  r?: number;
  fill: string;
}

const fmt = (v: number) => v.toFixed(2);

export class Scene {
  readonly width: number;
  readonly height: number;
  private parts: string[] = [];

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
  }

  line(l: Line) {
    const dash = l.dash ? ` stroke-dasharray="${l.dash}"` : "";
    this.parts.push(
      `<line x1="${fmt(l.x1)}" y1="${fmt(l.y1)}" x2="${fmt(l.x2)}" y2="${fmt(
        l.y2
      )}" stroke="${l.stroke}" stroke-width="${l.width ?? 1}"${dash}/>`
    );
  }

  marker(m: Marker) {
    this.parts.push(
      `<circle cx="${fmt(m.x)}" cy="${fmt(m.y)}" r="${m.r ?? 3}" fill="${m.fill}"/>`
    );
  }

  label(t: Label) {
    const anchor = t.anchor ?? "start";
    this.parts.push(
      `<text x="${fmt(t.x)}" y="${fmt(t.y)}" font-size="${
        t.size ?? 11
      }" font-family="monospace" text-anchor="${anchor}">${escapeXml(t.text)}</text>`
    );
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">`,
      `<rect width="${this.width}" height="${this.height}" fill="white"/>`,
      ...this.parts,
      "</svg>",
      "",
    ].join("\n");
  }
}

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
