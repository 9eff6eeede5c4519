/**
 * Text normalization mirroring the core toolkit's frozen rules, used to
 * count transcript tokens for forced alignment.
 */

const LETTERS = new Set("abcdefghijklmnopqrstuvwxyz");
const KEEP = new Set("abcdefghijklmnopqrstuvwxyz0123456789");

export function stripBracketed(text: string): string {
  const out: string[] = [];
  let depth = 0;
  for (const ch of text) {
    if (ch === "[") depth += 1;
    else if (ch === "]" && depth > 0) depth -= 1;
    else if (depth === 0) out.push(ch);
  }
  return out.join("").replace(/\s+/g, " ").trim();
}

export function normalizeTokens(text: string): string[] {
  const s = stripBracketed(text.toLowerCase()).replace(/[‘’ʼ]/g, "'");
  const chars: string[] = [];
  for (let i = 0; i < s.length; i++) {
    const ch = s[i];
    if (KEEP.has(ch)) {
      chars.push(ch);
    } else if (ch === "'" && i > 0 && i < s.length - 1 &&
               LETTERS.has(s[i - 1]) && LETTERS.has(s[i + 1])) {
      chars.push(ch);
    } else {
      chars.push(" ");
    }
  }
  return chars.join("").split(/\s+/).filter((t) => t.length > 0);
}
