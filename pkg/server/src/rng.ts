/**
 * Deterministic PRNG shared with the pipeline's in-process oracle.
 *
 * splitmix64 over exact 64-bit integer arithmetic (BigInt), so any
 * conforming implementation reproduces oracle draws bit-for-bit from the
 * same seed.
 */

import { createHash } from "node:crypto";

const MASK64 = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK64;
  }

  nextU64(): bigint {
    this.state = (this.state + GAMMA) & MASK64;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
    z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
    return z ^ (z >> 31n);
  }

  randrange(n: number): number {
    if (n <= 0) throw new Error("randrange needs n >= 1");
    return Number(this.nextU64() % BigInt(n));
  }

  choice<T>(items: readonly T[]): T {
    return items[this.randrange(items.length)];
  }

  random(): number {
    // 53-bit mantissa; exact across implementations.
    return Number(this.nextU64() >> 11n) * Math.pow(2, -53);
  }
}

const MASK53 = (1n << 53n) - 1n;

/** Collapse labels into a seed, matching the pipeline's hashing; clamped
 * to 53 bits so seeds survive JSON number round-trips exactly. */
export function stableSeed(...parts: Array<string | number>): bigint {
  const text = parts.map(String).join(":");
  const digest = createHash("sha256").update(text, "utf-8").digest();
  return digest.readBigUInt64BE(0) & MASK53;
}
