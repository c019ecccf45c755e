/** Geometry for the before/after comparison view: the divider position is a
 * fraction of the container width, clamped so the handle stays reachable. */

export const MIN_FRACTION = 0.02;
export const MAX_FRACTION = 0.98;

export function clampFraction(fraction: number): number {
  if (!Number.isFinite(fraction)) return 0.5;
  return Math.min(MAX_FRACTION, Math.max(MIN_FRACTION, fraction));
}

/** Convert a pointer x position to the divider fraction. */
export function fractionFromPointer(
  pointerX: number,
  containerLeft: number,
  containerWidth: number,
): number {
  if (containerWidth <= 0) return 0.5;
  return clampFraction((pointerX - containerLeft) / containerWidth);
}

/** CSS clip-path inset for the "after" layer at a given divider fraction. */
export function clipForFraction(fraction: number): string {
  const pct = (clampFraction(fraction) * 100).toFixed(2);
  return `inset(0 0 0 ${pct}%)`;
}
