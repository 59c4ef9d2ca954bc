/** Attribute-image world: manifest loading and value domains.
 *
 * A world manifest is JSONL with one record per line; oracle mode needs
 * each record's attributes (background color, object color, shape,
 * count). Image uris resolve by exact content_ref or trailing id.
 */

import { readFileSync } from "node:fs";

export const ATTRIBUTE_ORDER = [
  "background_color",
  "object_color",
  "shape",
  "count",
] as const;

export type AttributeName = (typeof ATTRIBUTE_ORDER)[number];

export interface Domains {
  background_color: string[];
  object_color: string[];
  shape: string[];
  count: number[];
}

export const DEFAULT_DOMAINS: Domains = {
  background_color: ["orange", "blue", "white", "green"],
  object_color: ["white", "blue", "green", "orange"],
  shape: ["square", "circle", "triangle"],
  count: Array.from({ length: 12 }, (_, i) => i + 1),
};

export interface WorldImage {
  imageId: string;
  contentRef: string;
  attributes: Record<AttributeName, string | number>;
}

export class World {
  private byRef = new Map<string, WorldImage>();
  private byId = new Map<string, WorldImage>();

  constructor(
    public readonly images: WorldImage[],
    public readonly domains: Domains = DEFAULT_DOMAINS,
  ) {
    for (const image of images) {
      this.byRef.set(image.contentRef, image);
      this.byId.set(image.imageId, image);
    }
  }

  resolve(uri: string): WorldImage | undefined {
    const direct = this.byRef.get(uri);
    if (direct) return direct;
    const tail = uri.split("/").pop() ?? uri;
    return this.byId.get(tail);
  }
}

export function loadWorldManifest(path: string, domains?: Domains): World {
  const images: WorldImage[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (const line of lines) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const record = JSON.parse(trimmed);
    if (!record.image_id || !record.content_ref) {
      throw new Error(`manifest record missing image_id/content_ref: ${trimmed}`);
    }
    if (!record.attributes) {
      throw new Error(`oracle mode needs attributes on ${record.image_id}`);
    }
    images.push({
      imageId: record.image_id,
      contentRef: record.content_ref,
      attributes: record.attributes,
    });
  }
  return new World(images, domains);
}
