// Candidate presenters: pure functions from a parameter vector to what the
// card shows. The server never learns how candidates are displayed.

import type { DomainJson } from "./api";

export type PresenterKind = "swatch" | "numeric" | "scatter";

export interface Presentation {
  kind: PresenterKind;
  /** CSS color derived from the first three normalized coordinates. */
  color?: string;
  /** Formatted per-coordinate values. */
  values?: string[];
  /** Normalized [0,1] x/y position for d = 2 scatter markers. */
  marker?: { x: number; y: number };
}

export function normalize(point: number[], domain: DomainJson): number[] {
  if (domain.kind === "box" && domain.lower && domain.upper) {
    return point.map((v, i) => {
      const lo = domain.lower![i];
      const hi = domain.upper![i];
      return hi > lo ? (v - lo) / (hi - lo) : 0.5;
    });
  }
  return point;
}

function channel(value: number): number {
  return Math.round(255 * Math.min(1, Math.max(0, value)));
}

export function colorSwatch(point: number[], domain: DomainJson): string {
  const unit = normalize(point, domain);
  const r = channel(unit[0] ?? 0.5);
  const g = channel(unit[1 % unit.length] ?? 0.5);
  const b = channel(unit[2 % unit.length] ?? 0.5);
  return `rgb(${r}, ${g}, ${b})`;
}

export function numericCard(point: number[]): string[] {
  return point.map((v, i) => `x${i} = ${v.toPrecision(4)}`);
}

export function scatterMarker(
  point: number[],
  domain: DomainJson,
): { x: number; y: number } | undefined {
  if (point.length !== 2) return undefined;
  const unit = normalize(point, domain);
  return { x: unit[0], y: unit[1] };
}

export function present(
  point: number[],
  domain: DomainJson,
  kind: PresenterKind,
): Presentation {
  switch (kind) {
    case "swatch":
      return { kind, color: colorSwatch(point, domain), values: numericCard(point) };
    case "scatter":
      return {
        kind,
        marker: scatterMarker(point, domain),
        values: numericCard(point),
      };
    default:
      return { kind: "numeric", values: numericCard(point) };
  }
}

/** Inline SVG path for the incumbent-mean sparkline, or null with <2 points. */
export function sparklinePath(
  means: number[],
  width = 160,
  height = 40,
): string | null {
  if (means.length < 2) return null;
  const lo = Math.min(...means);
  const hi = Math.max(...means);
  const span = hi - lo || 1;
  const step = width / (means.length - 1);
  return means
    .map((m, i) => {
      const x = (i * step).toFixed(1);
      const y = (height - ((m - lo) / span) * height).toFixed(1);
      return `${i === 0 ? "M" : "L"}${x},${y}`;
    })
    .join(" ");
}
