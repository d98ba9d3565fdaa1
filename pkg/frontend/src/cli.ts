#!/usr/bin/env node
import { PLOT_KINDS, PlotKind, PlotSpec, render } from "./plots.js";
import { SchemaError } from "./csv.js";

const USAGE = `usage: kljn-plots render --kind <${PLOT_KINDS.join("|")}> --in <csv> --out <svg> [--title <t>]`;

function parseArgs(argv: string[]): PlotSpec {
  if (argv[0] !== "render") {
    throw new UsageError(`unknown command: ${argv[0] ?? "(none)"}`);
  }
  const opts = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new UsageError(`bad argument: ${key}`);
    }
    opts.set(key.slice(2), value);
  }
  const kind = opts.get("kind");
  const input = opts.get("in");
  const output = opts.get("out");
  if (!kind || !input || !output) {
    throw new UsageError("--kind, --in and --out are required");
  }
  if (!(PLOT_KINDS as readonly string[]).includes(kind)) {
    throw new UsageError(`unknown kind: ${kind}`);
  }
  return { kind: kind as PlotKind, input, output, title: opts.get("title") };
}

class UsageError extends Error {}

export function main(argv: string[]): number {
  try {
    const spec = parseArgs(argv);
    const path = render(spec);
    console.log(`wrote ${path}`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`${err.message}\n${USAGE}`);
      return 2;
    }
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    const msg = err instanceof Error ? err.message : String(err);
    console.error(`error: ${msg}`);
    return 1;
  }
}

process.exitCode = main(process.argv.slice(2));
