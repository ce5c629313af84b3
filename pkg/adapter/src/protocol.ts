/**
 * Wire protocol: newline-delimited JSON, one object per line.
 *
 *   request:  {"id": k, "seq": "<token string>", "scores": ["name", ...]}
 *   response: {"id": k, "values": [numbers]}  or  {"id": k, "error": "..."}
 *
 * A line that does not parse as a request yields {"id": null, "error": ...}
 * and the loop keeps running.
 */

import { z } from "zod";
import type { Scorer } from "./scores.js";

export const Request = z.object({
  id: z.number().int(),
  seq: z.string(),
  scores: z.array(z.string()).min(1),
});
export type Request = z.infer<typeof Request>;

export type Response =
  | { id: number | null; values: number[] }
  | { id: number | null; error: string };

export function handleLine(line: string, scorer: Scorer): Response | null {
  const trimmed = line.trim();
  if (!trimmed) return null; // blank lines are not requests
  let raw: unknown;
  try {
    raw = JSON.parse(trimmed);
  } catch (err) {
    return { id: null, error: `parse: ${(err as Error).message}` };
  }
  const parsed = Request.safeParse(raw);
  if (!parsed.success) {
    const id =
      typeof (raw as any)?.id === "number" ? ((raw as any).id as number) : null;
    return { id, error: `bad request: ${parsed.error.issues[0]?.message}` };
  }
  const req = parsed.data;
  try {
    const values = scorer.score(req.scores, req.seq);
    if (!values.every((v) => Number.isFinite(v))) {
      return { id: req.id, error: "non-finite score" };
    }
    return { id: req.id, values };
  } catch (err) {
    return { id: req.id, error: (err as Error).message };
  }
}

export function formatResponse(resp: Response): string {
  // key order is fixed so conformance vectors can compare bytes
  if ("values" in resp) {
    return JSON.stringify({ id: resp.id, values: resp.values });
  }
  return JSON.stringify({ id: resp.id, error: resp.error });
}
