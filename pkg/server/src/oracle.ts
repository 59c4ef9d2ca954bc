/** Rule-based oracle agents over an attribute world.
 *
 * This is the wire-protocol twin of the pipeline's in-process oracle:
 * the grammar, constraint encoding, information-gain policy, noise
 * model, and every random draw are implemented identically so responses
 * are byte-for-byte reproducible from the same (payload, seed).
 */

import { InvokeRequest, RequestError } from "./protocol.js";
import { SplitMix64, stableSeed } from "./rng.js";
import {
  ATTRIBUTE_ORDER,
  AttributeName,
  Domains,
  World,
  WorldImage,
} from "./world.js";

export const VALUE_QUESTIONS: Record<AttributeName, string> = {
  count: "How many objects can you see?",
  shape: "What shape are the objects?",
  background_color: "What color is the background?",
  object_color: "What color are the objects?",
};

export const FORCED_GUESS_SUFFIX =
  "\n\nYou have no questions left. You must now make a guess. " +
  "Respond only in the format:\nAnswer: I know the answer, it is image X.";

export type Strategy = "info_gain" | "uniform_random" | "first_difference";

export function canonicalValue(value: string | number): string {
  return String(value).toLowerCase();
}

function unprocessable(message: string): RequestError {
  return new RequestError(422, "unprocessable", message);
}

// --- question grammar ---

type ParsedQuestion =
  | { kind: "value"; attr: AttributeName }
  | { kind: "binary"; attr: AttributeName; value: string };

function normalizeQuestion(question: string): string {
  return question
    .trim()
    .toLowerCase()
    .replace(/\s+/g, " ")
    .replace(/[?.! ]+$/, "");
}

const BINARY_OBJECTS_RE = /^are the objects ([a-z0-9 ]+?)$/;
const BINARY_BACKGROUND_RE = /^is the background ([a-z0-9 ]+?)$/;

export function parseGrammarQuestion(
  question: string,
  domains: Domains,
): ParsedQuestion {
  const norm = normalizeQuestion(question);
  for (const attr of ATTRIBUTE_ORDER) {
    if (norm === normalizeQuestion(VALUE_QUESTIONS[attr])) {
      return { kind: "value", attr };
    }
  }
  const objects = BINARY_OBJECTS_RE.exec(norm);
  if (objects) {
    const word = objects[1].trim();
    for (const attr of ["shape", "object_color"] as const) {
      for (const value of domains[attr]) {
        const valstr = canonicalValue(value);
        if (word === valstr || word === valstr + "s" || word === valstr + "es") {
          return { kind: "binary", attr, value: valstr };
        }
      }
    }
  }
  const background = BINARY_BACKGROUND_RE.exec(norm);
  if (background) {
    const word = background[1].trim();
    for (const value of domains.background_color) {
      if (word === canonicalValue(value)) {
        return { kind: "binary", attr: "background_color", value: canonicalValue(value) };
      }
    }
  }
  throw unprocessable(`question outside grammar: ${JSON.stringify(question)}`);
}

// --- constraints ---

export interface Constraint {
  attr: AttributeName;
  op: "=" | "!=";
  value: string;
}

function renderConstraint(c: Constraint): string {
  return `${c.attr}${c.op}${c.value}`;
}

export function encodeConstraints(constraints: Constraint[]): string {
  const seen = new Set<string>();
  const keys: Array<[string, string, string]> = [];
  for (const c of constraints) {
    const rendered = renderConstraint(c);
    if (!seen.has(rendered)) {
      seen.add(rendered);
      keys.push([c.attr, c.op, c.value]);
    }
  }
  // sort by (attr, op, value) with plain string comparison, matching the
  // tuple ordering the pipeline uses
  keys.sort((a, b) => {
    for (let i = 0; i < 3; i++) {
      if (a[i] < b[i]) return -1;
      if (a[i] > b[i]) return 1;
    }
    return 0;
  });
  return keys.map(([attr, op, value]) => `${attr}${op}${value}`).join("; ");
}

const CONSTRAINT_RE = /^([a-z_]+)(!?=)(.+)$/;

export function decodeConstraints(text: string): Constraint[] {
  const trimmed = text.trim();
  if (!trimmed) return [];
  const out: Constraint[] = [];
  for (const part of trimmed.split(";")) {
    const piece = part.trim();
    if (!piece) continue;
    const match = CONSTRAINT_RE.exec(piece);
    if (!match || !(ATTRIBUTE_ORDER as readonly string[]).includes(match[1])) {
      throw unprocessable(`unrecognized summary fragment: ${JSON.stringify(piece)}`);
    }
    out.push({
      attr: match[1] as AttributeName,
      op: match[2] as "=" | "!=",
      value: match[3].trim(),
    });
  }
  return out;
}

function satisfies(image: WorldImage, constraint: Constraint): boolean {
  const actual = canonicalValue(image.attributes[constraint.attr]);
  return constraint.op === "=" ? actual === constraint.value : actual !== constraint.value;
}

export function foldQa(
  constraints: Constraint[],
  question: string,
  answer: string,
  domains: Domains,
): Constraint[] {
  const parsed = parseGrammarQuestion(question, domains);
  const answerNorm = canonicalValue(answer.trim().replace(/\.+$/, ""));
  if (parsed.kind === "value") {
    return [...constraints, { attr: parsed.attr, op: "=", value: answerNorm }];
  }
  if (answerNorm !== "yes" && answerNorm !== "no") {
    throw unprocessable(`binary answer must be yes/no, got ${JSON.stringify(answer)}`);
  }
  return [
    ...constraints,
    { attr: parsed.attr, op: answerNorm === "yes" ? "=" : "!=", value: parsed.value },
  ];
}

// --- guesser policy ---

function entropy(values: string[]): number {
  const counts = new Map<string, number>();
  for (const v of values) counts.set(v, (counts.get(v) ?? 0) + 1);
  const total = values.length;
  let h = 0;
  for (const c of counts.values()) {
    const p = c / total;
    h -= p * Math.log2(p);
  }
  return h;
}

type Decision =
  | { kind: "ask"; attr: AttributeName }
  | { kind: "guess_one"; position: number }
  | { kind: "guess_uniform"; positions: number[] };

const SORTED_ATTRS = [...ATTRIBUTE_ORDER].sort() as AttributeName[];

export function policyDecision(
  images: WorldImage[],
  constraints: Constraint[],
  strategy: Strategy,
  forced: boolean,
): Decision {
  const allPositions = images.map((_, i) => i);
  if (strategy === "uniform_random") {
    return { kind: "guess_uniform", positions: allPositions };
  }
  const candidates = allPositions.filter((i) =>
    constraints.every((c) => satisfies(images[i], c)),
  );
  if (candidates.length === 0) {
    return { kind: "guess_uniform", positions: allPositions };
  }
  if (candidates.length === 1) {
    return { kind: "guess_one", position: candidates[0] };
  }
  if (forced) {
    return { kind: "guess_uniform", positions: candidates };
  }
  const rows = candidates.map((i) => images[i].attributes);
  if (strategy === "info_gain") {
    let bestAttr: AttributeName | null = null;
    let bestGain = 0.0;
    for (const attr of SORTED_ATTRS) {
      const gain = entropy(rows.map((r) => canonicalValue(r[attr])));
      if (gain > bestGain + 1e-12) {
        bestAttr = attr;
        bestGain = gain;
      }
    }
    if (bestAttr === null) {
      return { kind: "guess_uniform", positions: candidates };
    }
    return { kind: "ask", attr: bestAttr };
  }
  if (strategy === "first_difference") {
    for (const attr of ATTRIBUTE_ORDER) {
      const values = new Set(rows.map((r) => canonicalValue(r[attr])));
      if (values.size > 1) return { kind: "ask", attr };
    }
    return { kind: "guess_uniform", positions: candidates };
  }
  throw new Error(`unknown strategy ${strategy}`);
}

// --- payload handling ---

const QUESTION_LINE_RE = /^Question: (.*)$/gm;
const DESCRIPTION_LINE_RE = /^Image description: (.*)$/m;
const SUMMARY_FIELDS_RE =
  /^Description: (.*)\nQuestion: (.*)\nAnswer: (.*)\nYour summary: $/m;

export interface OracleConfig {
  noise: number;
  strategy: Strategy;
}

export class OracleAgent {
  constructor(
    private world: World,
    private config: OracleConfig,
  ) {
    if (config.noise < 0 || config.noise > 1) {
      throw new Error("noise must be in [0, 1]");
    }
  }

  private resolveImage(request: InvokeRequest, index: number): WorldImage {
    const ref = request.images[index];
    if (!ref || !("uri" in ref)) {
      throw unprocessable("oracle mode requires uri image references");
    }
    const image = this.world.resolve(ref.uri);
    if (!image) {
      throw unprocessable(`unknown image ${JSON.stringify(ref.uri)}`);
    }
    return image;
  }

  private payloadRng(request: InvokeRequest, ...parts: Array<string | number>): SplitMix64 {
    if (request.sampling.seed !== undefined && request.sampling.seed !== null) {
      return new SplitMix64(request.sampling.seed);
    }
    return new SplitMix64(stableSeed(request.text, ...parts));
  }

  invoke(request: InvokeRequest): string {
    switch (request.role) {
      case "GuesserTurn":
        return this.guesserTurn(request);
      case "GuesserSummary":
        return this.summarize(request);
      case "SelfQA-Question":
        return this.selfQaQuestion(request);
      default:
        return this.describe(request);
    }
  }

  private describe(request: InvokeRequest): string {
    const matches = [...request.text.matchAll(QUESTION_LINE_RE)];
    if (matches.length === 0) {
      throw unprocessable("payload carries no question line");
    }
    const question = matches[matches.length - 1][1];
    if (request.images.length < 1) {
      throw unprocessable("describer payload needs one image");
    }
    const image = this.resolveImage(request, 0);
    const rng = this.payloadRng(request, image.imageId);
    const parsed = parseGrammarQuestion(question, this.world.domains);
    const truth = image.attributes[parsed.attr];
    const lie = this.config.noise > 0 && rng.random() < this.config.noise;
    if (parsed.kind === "value") {
      if (!lie) return canonicalValue(truth);
      const wrong = (this.world.domains[parsed.attr] as Array<string | number>).filter(
        (v) => v !== truth,
      );
      if (wrong.length === 0) return canonicalValue(truth);
      return canonicalValue(rng.choice(wrong));
    }
    const honest = canonicalValue(truth) === parsed.value ? "yes" : "no";
    if (!lie) return honest;
    return honest === "yes" ? "no" : "yes";
  }

  private selfQaQuestion(request: InvokeRequest): string {
    const image = this.resolveImage(request, 0);
    const rng = this.payloadRng(request, image.imageId);
    const attr = SORTED_ATTRS[rng.randrange(SORTED_ATTRS.length)];
    return `Question: ${VALUE_QUESTIONS[attr]}`;
  }

  private summarize(request: InvokeRequest): string {
    const match = SUMMARY_FIELDS_RE.exec(request.text);
    if (!match) {
      throw unprocessable("summary payload fields not found");
    }
    const constraints = decodeConstraints(match[1]);
    const folded = foldQa(constraints, match[2], match[3], this.world.domains);
    return encodeConstraints(folded);
  }

  private guesserTurn(request: InvokeRequest): string {
    const match = DESCRIPTION_LINE_RE.exec(request.text);
    if (!match) {
      throw unprocessable("guesser payload has no description line");
    }
    const constraints = decodeConstraints(match[1]);
    const images = request.images.map((_, i) => this.resolveImage(request, i));
    const forced = request.text.endsWith(FORCED_GUESS_SUFFIX);
    const rng = this.payloadRng(request, images.length);
    const decision = policyDecision(images, constraints, this.config.strategy, forced);
    if (decision.kind === "ask") {
      return `Question: ${VALUE_QUESTIONS[decision.attr]}`;
    }
    const position =
      decision.kind === "guess_one"
        ? decision.position
        : decision.positions[rng.randrange(decision.positions.length)];
    return `Answer: I know the answer, it is image ${position + 1}.`;
  }
}
