/** Token-level comparison between the operator's query and a candidate.
 * Mirrors the server's text normalization (lowercase, strip diacritics,
 * non-alphanumerics become separators) so highlights line up with what the
 * matcher actually compared. */

export interface TokenSpan {
  token: string;
  /** true when the token is absent from the other side */
  highlighted: boolean;
}

export function normalizeTokens(text: string): string[] {
  return text
    .toLowerCase()
    .normalize("NFD")
    .replace(/[\u0300-\u036f]/g, "")
    .replace(/[^a-z0-9]+/g, " ")
    .split(" ")
    .filter((t) => t.length > 0);
}

/** Spans for one side: each original-order token, marked when the other side
 * lacks it. Identical strings therefore produce zero highlights. */
export function diffSpans(text: string, other: string): TokenSpan[] {
  const otherSet = new Set(normalizeTokens(other));
  return normalizeTokens(text).map((token) => ({
    token,
    highlighted: !otherSet.has(token),
  }));
}

export interface PairDiff {
  query: TokenSpan[];
  candidate: TokenSpan[];
  highlightCount: number;
}

export function diffPair(query: string, candidate: string): PairDiff {
  const q = diffSpans(query, candidate);
  const c = diffSpans(candidate, query);
  const highlightCount =
    q.filter((s) => s.highlighted).length +
    c.filter((s) => s.highlighted).length;
  return { query: q, candidate: c, highlightCount };
}
