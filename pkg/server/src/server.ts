/** HTTP service exposing the agent wire protocol.
 *
 * POST /invoke takes {role, text, images, sampling} and answers {text} or
 * {error:{code,message}}; GET /healthz reports readiness. Requests are
 * validated against the wire schema, oversized inline images are
 * rejected, and in-flight requests are capped.
 */

import express, { Express } from "express";
import { Server } from "node:http";
import { AddressInfo } from "node:net";

import { ModelAdapter } from "./adapters.js";
import { OracleAgent, Strategy } from "./oracle.js";
import { InvokeRequest, RequestError, invokeRequestSchema } from "./protocol.js";
import { loadWorldManifest } from "./world.js";

export interface ServerConfig {
  host?: string;
  port?: number;
  model: string; // "oracle" or a model identifier for the adapter
  worldManifest?: string; // required in oracle mode
  oracleNoise?: number;
  oracleStrategy?: Strategy;
  maxConcurrent?: number;
  requestTimeoutMs?: number;
  imageSizeCapBytes?: number;
}

export interface AppOptions {
  adapter?: ModelAdapter; // required when model is not "oracle"
  /** test hook: resolves when the backend is ready to serve */
  readyWhen?: Promise<void>;
}

function b64Bytes(b64: string): number {
  return Math.floor((b64.length * 3) / 4);
}

function withTimeout<T>(work: Promise<T>, ms: number): Promise<T> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new RequestError(504, "timeout", `request exceeded ${ms}ms`)),
      ms,
    );
    work.then(
      (value) => {
        clearTimeout(timer);
        resolve(value);
      },
      (error) => {
        clearTimeout(timer);
        reject(error);
      },
    );
  });
}

export function createApp(config: ServerConfig, options: AppOptions = {}): Express {
  const maxConcurrent = config.maxConcurrent ?? 8;
  const requestTimeoutMs = config.requestTimeoutMs ?? 60_000;
  const imageCap = config.imageSizeCapBytes ?? 8 * 1024 * 1024;
  if (maxConcurrent < 1 || requestTimeoutMs <= 0 || imageCap <= 0) {
    throw new Error("caps and timeout must be positive");
  }

  let ready = false;
  let oracle: OracleAgent | null = null;
  let adapter: ModelAdapter | null = null;

  const initialize = async () => {
    if (options.readyWhen) await options.readyWhen;
    if (config.model === "oracle") {
      if (!config.worldManifest) {
        throw new Error("oracle mode requires worldManifest");
      }
      oracle = new OracleAgent(loadWorldManifest(config.worldManifest), {
        noise: config.oracleNoise ?? 0,
        strategy: config.oracleStrategy ?? "info_gain",
      });
    } else {
      if (!options.adapter) {
        throw new Error(`model ${config.model} needs an adapter`);
      }
      adapter = options.adapter;
    }
    ready = true;
  };
  const initialized = initialize();
  initialized.catch(() => {
    // surfaced via /healthz staying 503 and invoke errors
  });

  let inFlight = 0;

  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/healthz", (_req, res) => {
    if (ready) {
      res.status(200).json({ status: "ok" });
    } else {
      res.status(503).json({ error: { code: "not_ready", message: "starting up" } });
    }
  });

  app.post("/invoke", async (req, res) => {
    if (!ready) {
      res.status(503).json({ error: { code: "not_ready", message: "starting up" } });
      return;
    }
    if (inFlight >= maxConcurrent) {
      res.status(503).json({
        error: { code: "overloaded", message: `at capacity (${maxConcurrent})` },
      });
      return;
    }
    inFlight += 1;
    try {
      const parsed = invokeRequestSchema.safeParse(req.body);
      if (!parsed.success) {
        res.status(400).json({
          error: { code: "bad_request", message: parsed.error.issues[0]?.message ?? "invalid request" },
        });
        return;
      }
      const request: InvokeRequest = parsed.data;
      for (const image of request.images) {
        if ("b64" in image && b64Bytes(image.b64) > imageCap) {
          res.status(413).json({
            error: {
              code: "image_too_large",
              message: `inline image exceeds ${imageCap} bytes`,
            },
          });
          return;
        }
      }
      const work = oracle
        ? Promise.resolve().then(() => oracle!.invoke(request))
        : adapter!(request);
      const text = await withTimeout(work, requestTimeoutMs);
      res.status(200).json({ text });
    } catch (error) {
      if (error instanceof RequestError) {
        res.status(error.status).json(error.body());
      } else {
        res.status(500).json({
          error: { code: "internal", message: String(error) },
        });
      }
    } finally {
      inFlight -= 1;
    }
  });

  // malformed JSON bodies surface as bad_request, not an HTML error page
  app.use(
    (err: unknown, _req: express.Request, res: express.Response, next: express.NextFunction) => {
      if (err instanceof SyntaxError) {
        res.status(400).json({ error: { code: "bad_request", message: "invalid JSON body" } });
      } else {
        next(err);
      }
    },
  );

  return app;
}

export interface RunningServer {
  server: Server;
  port: number;
  close: () => Promise<void>;
}

export async function serve(
  config: ServerConfig,
  options: AppOptions = {},
): Promise<RunningServer> {
  const app = createApp(config, options);
  const server = await new Promise<Server>((resolve, reject) => {
    const s = app
      .listen(config.port ?? 0, config.host ?? "127.0.0.1", () => resolve(s))
      .on("error", reject);
  });
  const address = server.address();
  if (address === null || typeof address === "string") {
    throw new Error("server is not listening on a TCP port");
  }
  const port = (address as AddressInfo).port;
  return {
    server,
    port,
    close: () =>
      new Promise<void>((resolve, reject) =>
        server.close((err) => (err ? reject(err) : resolve())),
      ),
  };
}
