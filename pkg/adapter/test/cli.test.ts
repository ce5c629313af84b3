import { describe, expect, it } from "vitest";
import { spawn } from "node:child_process";
import { existsSync } from "node:fs";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));
const cliPath = join(here, "..", "dist", "cli.js");

function runCli(args: string[], stdin: string): Promise<{ out: string; code: number | null }> {
  return new Promise((resolve, reject) => {
    const child = spawn(process.execPath, [cliPath, ...args], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    let out = "";
    child.stdout.on("data", (d) => (out += d));
    child.on("error", reject);
    child.on("close", (code) => resolve({ out, code }));
    child.stdin.write(stdin);
    child.stdin.end();
  });
}

describe.skipIf(!existsSync(cliPath))("built cli", () => {
  it("serves mock mode over stdio and exits cleanly at EOF", async () => {
    const { out, code } = await runCli(
      [],
      '{"id": 0, "seq": "A B B", "scores": ["len", "frac:B"]}\n{bad\n',
    );
    expect(code).toBe(0);
    const lines = out.split("\n").filter((l) => l.length > 0);
    expect(JSON.parse(lines[0])).toEqual({ id: 0, values: [3, 2 / 3] });
    expect(JSON.parse(lines[1])).toMatchObject({ id: null });
  });

  it("is deterministic across runs", async () => {
    const stdin = Array.from({ length: 20 }, (_, i) =>
      JSON.stringify({ id: i, seq: "A B C A", scores: ["frac:A", "count:C"] }),
    ).join("\n");
    const a = await runCli([], stdin + "\n");
    const b = await runCli([], stdin + "\n");
    expect(a.out).toBe(b.out);
    expect(a.out.split("\n").filter((l) => l)).toHaveLength(20);
  });

  it("rejects unknown modes with exit code 2", async () => {
    const { code } = await runCli(["--mode", "quantum"], "");
    expect(code).toBe(2);
  });

  it("fails fast in chem mode when the toolkit is absent", async () => {
    const { code } = await runCli(["--mode", "chem", "--chem-module", "no-such-pkg"], "");
    expect(code).toBe(1);
  });
});
