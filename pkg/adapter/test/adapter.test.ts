import assert from "node:assert/strict";
import { spawnSync } from "node:child_process";
import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import test from "node:test";

import { matches, parseFilter, FilterParseError } from "../src/filter";
import { readIndex, seekStart } from "../src/store";

const MAIN = path.join(__dirname, "..", "src", "main.js");
const STRIDE = 1024;

function encode(instant: number, streams: Record<string, unknown>): string {
  const sorted: Record<string, unknown> = {};
  for (const k of Object.keys(streams).sort()) {
    sorted[k] = streams[k];
  }
  return JSON.stringify({ instant, streams: sorted });
}

interface Fixture {
  dir: string;
  store: string;
  lines: string[];
}

function makeFixture(n: number, withIndex = true): Fixture {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-"));
  const store = path.join(dir, "events.log");
  const lines: string[] = [];
  const offsets: number[] = [];
  let pos = 0;
  for (let i = 0; i < n; i++) {
    const line = encode(i, {
      dstAddr: `dst${i % 7}`,
      dstPort: i % 3 === 0 ? 0 : 443,
      protocol: i % 3 === 0 ? "UDP" : "TCP",
      packets: (i % 11) + 1,
    });
    offsets.push(pos);
    pos += Buffer.byteLength(line) + 1;
    lines.push(line);
  }
  fs.writeFileSync(store, lines.join("\n") + (n ? "\n" : ""));
  if (withIndex) {
    const idx: string[] = [];
    for (let i = 0; i < n; i += STRIDE) {
      idx.push(`${i} ${offsets[i]}`);
    }
    fs.writeFileSync(store + ".idx", idx.join("\n") + (idx.length ? "\n" : ""));
  }
  return { dir, store, lines };
}

function run(args: string[]): { status: number; stdout: string; stderr: string } {
  const r = spawnSync("node", [MAIN, ...args], { encoding: "utf8" });
  return { status: r.status ?? -1, stdout: r.stdout, stderr: r.stderr };
}

test("full range without filter echoes every record verbatim", () => {
  const f = makeFixture(40);
  const r = run(["--store", f.store, "--from", "0", "--to", "40"]);
  assert.equal(r.status, 0);
  assert.equal(r.stdout, f.lines.join("\n") + "\n");
});

test("sub-range respects the half-open bounds", () => {
  const f = makeFixture(40);
  const r = run(["--store", f.store, "--from", "5", "--to", "12"]);
  assert.equal(r.status, 0);
  assert.deepEqual(r.stdout.trimEnd().split("\n"), f.lines.slice(5, 12));
});

test("equality filter keeps only matching records", () => {
  const f = makeFixture(60);
  const filter = JSON.stringify({ protocol: "UDP", dstPort: 0 });
  const r = run(["--store", f.store, "--from", "0", "--to", "60", "--filter", filter]);
  assert.equal(r.status, 0);
  const got = r.stdout.trimEnd().split("\n");
  const want = f.lines.filter((l) => {
    const d = JSON.parse(l);
    return d.streams.protocol === "UDP" && d.streams.dstPort === 0;
  });
  assert.deepEqual(got, want);
  assert.ok(want.length > 0);
});

test("membership filter accepts any listed value", () => {
  const f = makeFixture(30);
  const filter = JSON.stringify({ dstAddr: ["dst1", "dst2"] });
  const r = run(["--store", f.store, "--from", "0", "--to", "30", "--filter", filter]);
  assert.equal(r.status, 0);
  for (const line of r.stdout.trimEnd().split("\n")) {
    const d = JSON.parse(line);
    assert.ok(["dst1", "dst2"].includes(d.streams.dstAddr));
  }
});

test("empty range produces no output and exit 0", () => {
  const f = makeFixture(10);
  const r = run(["--store", f.store, "--from", "4", "--to", "4"]);
  assert.equal(r.status, 0);
  assert.equal(r.stdout, "");
});

test("argument errors exit 2", () => {
  const f = makeFixture(5);
  assert.equal(run(["--store", f.store, "--from", "0"]).status, 2);
  assert.equal(run(["--store", f.store, "--from", "x", "--to", "3"]).status, 2);
  assert.equal(run(["--store", f.store, "--from", "3", "--to", "1"]).status, 2);
  assert.equal(run(["--store", path.join(f.dir, "nope.log"), "--from", "0", "--to", "1"]).status, 2);
  assert.equal(run(["--store", f.store, "--from", "0", "--to", "3", "--bogus", "1"]).status, 2);
  assert.equal(run(["--store", f.store, "--from", "0", "--to", "3", "--filter", "[1]"]).status, 2);
});

test("range past the end of the store exits 2", () => {
  const f = makeFixture(5, false);
  const r = run(["--store", f.store, "--from", "0", "--to", "9"]);
  assert.equal(r.status, 2);
  assert.match(r.stderr, /past the end/);
});

test("corrupt records exit 3", () => {
  const f = makeFixture(5, false);
  const lines = fs.readFileSync(f.store, "utf8").trimEnd().split("\n");
  lines[2] = lines[2].replace('"instant":2', '"instant":9');
  fs.writeFileSync(f.store, lines.join("\n") + "\n");
  const r = run(["--store", f.store, "--from", "0", "--to", "5"]);
  assert.equal(r.status, 3);
  assert.match(r.stderr, /expected instant 2/);

  fs.writeFileSync(f.store, "not json\n");
  assert.equal(run(["--store", f.store, "--from", "0", "--to", "1"]).status, 3);
});

test("index-assisted and full-scan fetches agree", () => {
  const n = 2 * STRIDE + 100;
  const f = makeFixture(n);
  const args = ["--from", String(STRIDE + 7), "--to", String(2 * STRIDE + 9)];
  const indexed = run(["--store", f.store, ...args]);
  fs.unlinkSync(f.store + ".idx");
  const scanned = run(["--store", f.store, ...args]);
  assert.equal(indexed.status, 0);
  assert.equal(scanned.status, 0);
  assert.equal(indexed.stdout, scanned.stdout);
  assert.deepEqual(
    indexed.stdout.trimEnd().split("\n"),
    f.lines.slice(STRIDE + 7, 2 * STRIDE + 9),
  );
});

test("seekStart picks the greatest entry at or before the start", () => {
  const entries = [
    { instant: 0, offset: 0 },
    { instant: 1024, offset: 9000 },
    { instant: 2048, offset: 18500 },
  ];
  assert.deepEqual(seekStart(entries, 5), { instant: 0, offset: 0 });
  assert.deepEqual(seekStart(entries, 1024), { instant: 1024, offset: 9000 });
  assert.deepEqual(seekStart(entries, 3000), { instant: 2048, offset: 18500 });
  assert.deepEqual(seekStart([], 500), { instant: 0, offset: 0 });
});

test("readIndex rejects malformed sidecars", () => {
  const f = makeFixture(3);
  fs.writeFileSync(f.store + ".idx", "0 zero\n");
  assert.throws(() => readIndex(f.store + ".idx"));
});

test("filter matching distinguishes value kinds", () => {
  assert.ok(matches({ a: 1 }, parseFilter('{"a":1}')));
  assert.ok(!matches({ a: 1 }, parseFilter('{"a":true}')));
  assert.ok(!matches({ a: true }, parseFilter('{"a":1}')));
  assert.ok(!matches({}, parseFilter('{"a":1}')));
  assert.ok(matches({ a: "x", b: 2 }, parseFilter('{"a":"x"}')));
  assert.ok(matches({ a: [1, 2] }, parseFilter('{"a":[[1,2],[3]]}')));
  assert.ok(!matches({ a: [1, 3] }, parseFilter('{"a":[[1,2],[3]]}')));
  assert.throws(() => parseFilter('{"a":{"no":1}}'), FilterParseError);
});
