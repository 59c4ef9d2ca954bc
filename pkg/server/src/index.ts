#!/usr/bin/env node
/** CLI entry: load a JSON config and serve the agent wire protocol.
 *
 * Usage: dialog-forge-agent-server --config server.json
 * Config: {host, port, model ("oracle" or an identifier), worldManifest,
 * oracleNoise, oracleStrategy, maxConcurrent, requestTimeoutMs,
 * imageSizeCapBytes, modelBaseUrl, modelApiKeyEnv}
 */

import { readFileSync } from "node:fs";

import { openAiCompatAdapter } from "./adapters.js";
import { serve, ServerConfig } from "./server.js";

function parseArgs(argv: string[]): { config: string } {
  const index = argv.indexOf("--config");
  if (index === -1 || index + 1 >= argv.length) {
    console.error("usage: dialog-forge-agent-server --config <file.json>");
    process.exit(2);
  }
  return { config: argv[index + 1] };
}

async function main() {
  const args = parseArgs(process.argv.slice(2));
  const raw = JSON.parse(readFileSync(args.config, "utf-8"));
  const config: ServerConfig = raw;
  const adapter =
    config.model === "oracle"
      ? undefined
      : openAiCompatAdapter({
          baseUrl: raw.modelBaseUrl ?? "http://127.0.0.1:8080/v1",
          model: config.model,
          apiKey: raw.modelApiKeyEnv ? process.env[raw.modelApiKeyEnv] : undefined,
        });
  const running = await serve(config, { adapter });
  console.log(
    `agent server listening on ${config.host ?? "127.0.0.1"}:${running.port} ` +
      `(model=${config.model})`,
  );
  const shutdown = () => {
    running.close().then(() => process.exit(0));
  };
  process.on("SIGINT", shutdown);
  process.on("SIGTERM", shutdown);
}

main().catch((error) => {
  console.error(String(error));
  process.exit(1);
});
