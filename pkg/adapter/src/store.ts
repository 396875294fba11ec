/** Read side of the append-only event store: line-delimited records plus an
 * optional `<store>.idx` sidecar mapping instants to byte offsets. */

import fs from "node:fs";

import { Filter, matches } from "./filter";

export class StoreCorruptError extends Error {}
export class RangeError_ extends Error {}

export interface EventRecord {
  instant: number;
  streams: Record<string, unknown>;
  raw: string; // original line, re-emitted verbatim
}

interface IndexEntry {
  instant: number;
  offset: number;
}

export function readIndex(idxPath: string): IndexEntry[] {
  if (!fs.existsSync(idxPath)) {
    return [];
  }
  const entries: IndexEntry[] = [];
  for (const line of fs.readFileSync(idxPath, "utf8").split("\n")) {
    if (!line.trim()) {
      continue;
    }
    const parts = line.trim().split(/\s+/);
    const instant = Number(parts[0]);
    const offset = Number(parts[1]);
    if (parts.length !== 2 || !Number.isInteger(instant) || !Number.isInteger(offset)) {
      throw new StoreCorruptError(`malformed index line: ${line}`);
    }
    entries.push({ instant, offset });
  }
  return entries;
}

/** Greatest indexed position at or before `frm`; full scan from zero when the
 * sidecar is missing or useless. */
export function seekStart(entries: IndexEntry[], frm: number): IndexEntry {
  let best: IndexEntry = { instant: 0, offset: 0 };
  for (const e of entries) {
    if (e.instant <= frm && e.instant >= best.instant) {
      best = e;
    }
  }
  return best;
}

function parseLine(line: string, expected: number): EventRecord {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch (e) {
    throw new StoreCorruptError(`unreadable record at instant ${expected}: ${(e as Error).message}`);
  }
  const rec = doc as { instant?: unknown; streams?: unknown };
  if (
    rec === null ||
    typeof rec !== "object" ||
    typeof rec.instant !== "number" ||
    rec.streams === null ||
    typeof rec.streams !== "object"
  ) {
    throw new StoreCorruptError(`malformed record at instant ${expected}`);
  }
  if (rec.instant !== expected) {
    throw new StoreCorruptError(`expected instant ${expected}, found ${rec.instant}`);
  }
  return { instant: rec.instant, streams: rec.streams as Record<string, unknown>, raw: line };
}

/** Stream matching records of [frm, to) to `emit`, in instant order. */
export function fetchRange(
  storePath: string,
  frm: number,
  to: number,
  filter: Filter,
  emit: (rec: EventRecord) => void,
): void {
  if (frm === to) {
    return;
  }
  const start = seekStart(readIndex(storePath + ".idx"), frm);
  const fd = fs.openSync(storePath, "r");
  let instant = start.instant;
  let done = false;
  try {
    const chunk = Buffer.alloc(1 << 16);
    let pos = start.offset;
    let pending = "";
    while (!done) {
      const n = fs.readSync(fd, chunk, 0, chunk.length, pos);
      if (n === 0) {
        break;
      }
      pos += n;
      pending += chunk.toString("utf8", 0, n);
      let nl;
      while ((nl = pending.indexOf("\n")) >= 0) {
        const line = pending.slice(0, nl);
        pending = pending.slice(nl + 1);
        if (!line.trim()) {
          continue;
        }
        if (instant >= to) {
          done = true;
          break;
        }
        if (instant >= frm) {
          const rec = parseLine(line, instant);
          if (matches(rec.streams, filter)) {
            emit(rec);
          }
        }
        instant++;
      }
    }
  } finally {
    fs.closeSync(fd);
  }
  if (!done && instant < to) {
    throw new RangeError_(`range [${frm},${to}) extends past the end of the store (${instant} events seen)`);
  }
}
