/**
 * Serving loops. The stdio loop mirrors the line-delimited worker
 * pattern: read a line, answer a line, never die on bad input. The TCP
 * loop runs the same handler per connection.
 *
 * `shuffle > 1` buffers responses and flushes each block in reverse
 * order, which exercises a client's out-of-order re-matching by id.
 */

import { createInterface } from "node:readline";
import { createServer, type Server } from "node:net";
import type { Readable, Writable } from "node:stream";
import { handleLine, formatResponse, type Response } from "./protocol.js";
import type { Scorer } from "./scores.js";

export interface ServeOptions {
  scorer: Scorer;
  shuffle?: number;
}

/** Wire a readable/writable pair to the protocol handler. Resolves when
 * the input stream ends and every buffered response has been flushed. */
export function serveStream(
  input: Readable,
  output: Writable,
  opts: ServeOptions,
): Promise<void> {
  const shuffle = opts.shuffle ?? 0;
  const buffered: Response[] = [];

  const emit = (resp: Response) => {
    output.write(formatResponse(resp) + "\n");
  };
  const flush = () => {
    while (buffered.length > 0) emit(buffered.pop()!);
  };

  const rl = createInterface({ input, crlfDelay: Infinity });
  rl.on("line", (line) => {
    const resp = handleLine(line, opts.scorer);
    if (resp === null) return;
    if (shuffle > 1) {
      buffered.push(resp);
      if (buffered.length >= shuffle) flush();
    } else {
      emit(resp);
    }
  });
  return new Promise((resolve) => {
    rl.on("close", () => {
      flush();
      resolve();
    });
  });
}

export function serveTcp(port: number, opts: ServeOptions): Server {
  const server = createServer((conn) => {
    conn.on("error", () => conn.destroy());
    void serveStream(conn, conn, opts).then(() => conn.end());
  });
  server.listen(port);
  return server;
}
