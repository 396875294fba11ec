#!/usr/bin/env node
/** External log adapter.
 *
 * Usage: log-adapter --store <path> --from <n> --to <n> [--filter <json>]
 *
 * Emits the store's records in [from, to) that satisfy the filter, one per
 * line on standard output, in instant order and in their stored byte form.
 * Exit 0 on success, 2 on argument errors, 3 on store corruption.
 */

import fs from "node:fs";
import process from "node:process";

import { Filter, FilterParseError, parseFilter } from "./filter";
import { fetchRange, RangeError_, StoreCorruptError } from "./store";

class ArgError extends Error {}

interface Args {
  store: string;
  from: number;
  to: number;
  filter: Filter;
}

function parseArgs(argv: string[]): Args {
  const opts = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (!a.startsWith("--")) {
      throw new ArgError(`unexpected argument: ${a}`);
    }
    if (i + 1 >= argv.length) {
      throw new ArgError(`missing value for ${a}`);
    }
    opts.set(a.slice(2), argv[++i]);
  }
  for (const k of opts.keys()) {
    if (!["store", "from", "to", "filter"].includes(k)) {
      throw new ArgError(`unknown option --${k}`);
    }
  }
  const store = opts.get("store");
  if (!store) {
    throw new ArgError("--store is required");
  }
  if (!fs.existsSync(store)) {
    throw new ArgError(`store does not exist: ${store}`);
  }
  const from = Number(opts.get("from"));
  const to = Number(opts.get("to"));
  if (!Number.isInteger(from) || !Number.isInteger(to)) {
    throw new ArgError("--from and --to must be integers");
  }
  if (from < 0 || to < from) {
    throw new ArgError(`invalid range [${from},${to})`);
  }
  return { store, from, to, filter: parseFilter(opts.get("filter") ?? "{}") };
}

function main(): number {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (e) {
    if (e instanceof ArgError || e instanceof FilterParseError) {
      process.stderr.write(`log-adapter: ${e.message}\n`);
      return 2;
    }
    throw e;
  }
  const out: string[] = [];
  try {
    fetchRange(args.store, args.from, args.to, args.filter, (rec) => {
      out.push(rec.raw);
    });
  } catch (e) {
    if (e instanceof RangeError_) {
      process.stderr.write(`log-adapter: ${e.message}\n`);
      return 2;
    }
    if (e instanceof StoreCorruptError) {
      process.stderr.write(`log-adapter: ${e.message}\n`);
      return 3;
    }
    throw e;
  }
  if (out.length) {
    process.stdout.write(out.join("\n") + "\n");
  }
  return 0;
}

// exitCode rather than exit(): a hard exit can truncate buffered stdout
process.exitCode = main();
