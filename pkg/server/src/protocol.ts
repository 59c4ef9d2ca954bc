/** Wire schema for the agent protocol: request/response shapes and the
 * structured error payload. Unknown request keys are tolerated. */

import { z } from "zod";

export const ROLES = [
  "Describer",
  "GuesserTurn",
  "GuesserSummary",
  "SelfQA-Question",
  "SelfQA-Answer",
  "SuccessDetection",
] as const;

export const imageRefSchema = z
  .union([
    z.object({ uri: z.string().min(1) }).strict(),
    z.object({ b64: z.string().min(1), media_type: z.string().min(1) }).strict(),
  ]);

export const samplingSchema = z
  .object({
    top_p: z.number().gt(0).lte(1),
    temperature: z.number().gte(0),
    seed: z.number().int().optional(),
  })
  .passthrough();

export const invokeRequestSchema = z
  .object({
    role: z.enum(ROLES),
    text: z.string(),
    images: z.array(imageRefSchema),
    sampling: samplingSchema,
  })
  .passthrough();

export type ImageRef = z.infer<typeof imageRefSchema>;
export type Sampling = z.infer<typeof samplingSchema>;
export type InvokeRequest = z.infer<typeof invokeRequestSchema>;

export interface WireError {
  error: { code: string; message: string };
}

export class RequestError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }

  body(): WireError {
    return { error: { code: this.code, message: this.message } };
  }
}
