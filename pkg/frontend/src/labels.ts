import { LABELS, Label } from "./api.js";

export type Rand = () => number;

/** Label button order, drawn once per session to avoid position bias. */
export function shuffledLabels(rand: Rand = Math.random): Label[] {
  const order: Label[] = [...LABELS];
  for (let i = order.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

export function isLabel(value: unknown): value is Label {
  return typeof value === "string" && (LABELS as readonly string[]).includes(value);
}
