#!/usr/bin/env node
/**
 * chem-oracle-adapter [--mode mock|chem] [--tcp PORT] [--shuffle N]
 *
 * Serves the line protocol on stdio (default) or a TCP port. Mock mode
 * scores with the built-in closed forms; chem mode delegates to the
 * chemistry toolkit named by --chem-module.
 */

import { parseArgs } from "node:util";
import { MockScorer, loadChemScorer, type Scorer } from "./scores.js";
import { serveStream, serveTcp } from "./server.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      mode: { type: "string", default: "mock" },
      tcp: { type: "string" },
      shuffle: { type: "string", default: "0" },
      "chem-module": { type: "string", default: "openchem" },
    },
  });

  let scorer: Scorer;
  if (values.mode === "mock") {
    scorer = new MockScorer();
  } else if (values.mode === "chem") {
    scorer = await loadChemScorer(values["chem-module"]);
  } else {
    process.stderr.write(`unknown mode ${JSON.stringify(values.mode)}\n`);
    return 2;
  }

  const shuffle = Number(values.shuffle);
  if (!Number.isInteger(shuffle) || shuffle < 0) {
    process.stderr.write("--shuffle must be a non-negative integer\n");
    return 2;
  }

  if (values.tcp !== undefined) {
    const port = Number(values.tcp);
    if (!Number.isInteger(port) || port < 0 || port > 65535) {
      process.stderr.write("--tcp must be a port number\n");
      return 2;
    }
    const server = serveTcp(port, { scorer, shuffle });
    await new Promise<void>((resolve) => {
      server.on("listening", () => {
        const addr = server.address();
        const bound = typeof addr === "object" && addr ? addr.port : port;
        process.stderr.write(`listening on ${bound}\n`);
      });
      process.on("SIGINT", () => server.close(() => resolve()));
      process.on("SIGTERM", () => server.close(() => resolve()));
    });
    return 0;
  }

  await serveStream(process.stdin, process.stdout, { scorer, shuffle });
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`${(err as Error).message}\n`);
    process.exit(1);
  },
);
