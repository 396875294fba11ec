/** Conjunctive equality / membership filters over decoded event bindings. */

export type Scalar = null | boolean | number | string;
export type FilterValue = Scalar | Scalar[];
export type Filter = Record<string, FilterValue>;

export class FilterParseError extends Error {}

export function parseFilter(text: string): Filter {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new FilterParseError(`filter is not valid JSON: ${(e as Error).message}`);
  }
  if (doc === null || typeof doc !== "object" || Array.isArray(doc)) {
    throw new FilterParseError("filter must be a field->value object");
  }
  for (const [k, v] of Object.entries(doc as Record<string, unknown>)) {
    if (v !== null && typeof v === "object" && !Array.isArray(v)) {
      throw new FilterParseError(`filter value for ${k} must be a scalar or a membership set`);
    }
  }
  return doc as Filter;
}

// structural equality on decoded wire values; both sides come from the same
// canonical encoder, so key order is stable
function eq(a: unknown, b: unknown): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}

export function matches(bindings: Record<string, unknown>, filter: Filter): boolean {
  for (const [field, want] of Object.entries(filter)) {
    if (!(field in bindings)) {
      return false;
    }
    const got = bindings[field];
    if (Array.isArray(want)) {
      if (!want.some((w) => eq(got, w))) {
        return false;
      }
    } else if (!eq(got, want)) {
      return false;
    }
  }
  return true;
}
