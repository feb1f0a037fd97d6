/**
 * certmask-bridge: external classifier adapter.
 *
 *   node dist/main.js --mode mirror --thresholds 64,128,192
 *   node dist/main.js --mode hook --hook ./my_model.mjs
 *
 * Emits the ready handshake, then answers each request line with a
 * matching-id reply. A malformed request with a recoverable id yields an
 * error reply; an unrecoverable line exits non-zero. Closing stdin ends the
 * loop and the process exits 0.
 */

import * as readline from "node:readline";
import { stdin, stdout, exit, argv, stderr } from "node:process";
import { loadHook, mirrorMeanThreshold, type Model } from "./model.js";
import {
  RequestError,
  errorLine,
  labelLine,
  parseRequest,
  readyLine,
} from "./protocol.js";

interface Args {
  mode: "mirror" | "hook";
  thresholds: number[];
  hook: string | null;
}

function parseArgs(args: string[]): Args {
  const parsed: Args = { mode: "mirror", thresholds: [64, 128, 192], hook: null };
  for (let i = 0; i < args.length; i++) {
    const arg = args[i];
    const next = () => {
      i += 1;
      if (i >= args.length) throw new Error(`missing value for ${arg}`);
      return args[i];
    };
    switch (arg) {
      case "--mode": {
        const mode = next();
        if (mode !== "mirror" && mode !== "hook") {
          throw new Error(`unknown mode ${mode}`);
        }
        parsed.mode = mode;
        break;
      }
      case "--thresholds":
        parsed.thresholds = next().split(",").map((t) => {
          const v = Number(t);
          if (!Number.isInteger(v)) throw new Error(`bad threshold ${t}`);
          return v;
        });
        break;
      case "--hook":
        parsed.hook = next();
        break;
      default:
        throw new Error(`unknown argument ${arg}`);
    }
  }
  if (parsed.mode === "hook" && parsed.hook === null) {
    throw new Error("--mode hook requires --hook <module path>");
  }
  return parsed;
}

async function buildModel(args: Args): Promise<Model> {
  if (args.mode === "hook") {
    return loadHook(args.hook!);
  }
  return mirrorMeanThreshold(args.thresholds);
}

export async function serve(model: Model): Promise<void> {
  stdout.write(readyLine(model.classes) + "\n");
  for await (const line of readline.createInterface({ input: stdin })) {
    if (line.trim() === "") {
      continue;
    }
    let reply: string;
    try {
      const request = parseRequest(line);
      const label = await model.classify(request);
      if (!Number.isInteger(label) || label < 0 || label >= model.classes) {
        reply = errorLine(request.id, `model produced label ${label} outside [0, ${model.classes})`);
      } else {
        reply = labelLine(request.id, label);
      }
    } catch (err) {
      if (err instanceof RequestError && err.requestId !== undefined) {
        reply = errorLine(err.requestId, err.message);
      } else {
        stderr.write(`fatal: ${err instanceof Error ? err.message : err}\n`);
        exit(1);
        return;
      }
    }
    stdout.write(reply + "\n");
  }
}

async function main(): Promise<void> {
  let model: Model;
  try {
    model = await buildModel(parseArgs(argv.slice(2)));
  } catch (err) {
    stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    exit(2);
    return;
  }
  await serve(model);
}

main().then(
  () => exit(0),
  (err) => {
    stderr.write(`fatal: ${err instanceof Error ? err.message : err}\n`);
    exit(1);
  },
);
