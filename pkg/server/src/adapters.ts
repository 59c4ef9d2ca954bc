/** Model adapters: one async function turns a wire request into text.
 *
 * Model choice is configuration, not code; any local multimodal chat
 * model with an image+text interface fits behind this signature. The
 * bundled adapter speaks the common OpenAI-compatible chat endpoint that
 * local inference servers expose.
 */

import { InvokeRequest } from "./protocol.js";

export type ModelAdapter = (request: InvokeRequest) => Promise<string>;

export interface OpenAiCompatOptions {
  baseUrl: string; // e.g. http://127.0.0.1:8080/v1
  model: string;
  apiKey?: string;
}

export function openAiCompatAdapter(options: OpenAiCompatOptions): ModelAdapter {
  return async (request: InvokeRequest): Promise<string> => {
    const content: Array<Record<string, unknown>> = [
      { type: "text", text: request.text },
    ];
    for (const image of request.images) {
      const url =
        "uri" in image
          ? image.uri
          : `data:${image.media_type};base64,${image.b64}`;
      content.push({ type: "image_url", image_url: { url } });
    }
    const response = await fetch(`${options.baseUrl.replace(/\/$/, "")}/chat/completions`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        ...(options.apiKey ? { Authorization: `Bearer ${options.apiKey}` } : {}),
      },
      body: JSON.stringify({
        model: options.model,
        messages: [{ role: "user", content }],
        top_p: request.sampling.top_p,
        temperature: request.sampling.temperature,
        ...(request.sampling.seed !== undefined ? { seed: request.sampling.seed } : {}),
      }),
    });
    if (!response.ok) {
      throw new Error(`model endpoint returned ${response.status}`);
    }
    const parsed = (await response.json()) as {
      choices?: Array<{ message?: { content?: string } }>;
    };
    const text = parsed.choices?.[0]?.message?.content;
    if (typeof text !== "string") {
      throw new Error("model endpoint response missing message content");
    }
    return text;
  };
}
