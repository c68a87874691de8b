/**
 * Coefficient export: the text record the CLI's sample command replays.
 * Format: '#' comment lines, then whitespace-separated floats, one vector
 * per line.
 */

export function formatCoefficients(coefficients: ArrayLike<number>): string {
  const values = Array.from(coefficients, (v) => String(v)).join(" ");
  return `# exported from the viewer: one coefficient per handle\n${values}\n`;
}
