/**
 * Score functions.
 *
 * Mock mode computes documented closed forms over the whitespace token
 * list, so conformance tests need no chemistry stack and results are
 * identical on every platform:
 *
 *   len           number of tokens
 *   count:<TOK>   occurrences of TOK
 *   frac:<TOK>    fraction of tokens equal to TOK (0 for the empty string)
 *
 * Chem mode is a pass-through to an optional chemistry toolkit resolved
 * at startup; no score formula is owned here.
 */

export type ScoreFn = (tokens: string[]) => number;

export function mockScore(name: string, tokens: string[]): number {
  if (name === "len") return tokens.length;
  if (name.startsWith("count:")) {
    const tok = name.slice("count:".length);
    return tokens.filter((t) => t === tok).length;
  }
  if (name.startsWith("frac:")) {
    const tok = name.slice("frac:".length);
    if (tokens.length === 0) return 0;
    return tokens.filter((t) => t === tok).length / tokens.length;
  }
  throw new Error(`unknown score ${JSON.stringify(name)}`);
}

export interface Scorer {
  score(names: string[], seq: string): number[];
}

export class MockScorer implements Scorer {
  score(names: string[], seq: string): number[] {
    const tokens = seq.split(/\s+/).filter((t) => t.length > 0);
    return names.map((n) => mockScore(n, tokens));
  }
}

/** Chemistry pass-through; the toolkit module is loaded dynamically so
 * mock mode carries no dependency on it. */
export async function loadChemScorer(moduleName = "openchem"): Promise<Scorer> {
  let chem: any;
  try {
    chem = await import(moduleName);
  } catch {
    throw new Error(
      `chem mode requires the ${moduleName} package to be installed`,
    );
  }
  return {
    score(names: string[], seq: string): number[] {
      const smiles = seq.replace(/\s+/g, "");
      return names.map((n) => {
        const fn = chem[n];
        if (typeof fn !== "function") {
          throw new Error(`toolkit exposes no score ${JSON.stringify(n)}`);
        }
        return Number(fn(smiles));
      });
    },
  };
}
