/**
 * Deterministic full-shape VGG-19 test checkpoint. Real weights cannot be
 * redistributed with the repo, so tests run against a seeded stand-in with
 * the genuine tensor inventory: all sixteen trunk conv layers plus a token
 * classifier tensor (which the converter must refuse to emit).
 */
import { writeSafetensors } from './safetensors.js';
import { TRUNK, biasKey, expectedWeightShape, weightKey } from './vgg.js';

/** mulberry32: tiny seeded PRNG, plenty for fixture data */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function fillNormal(out: Float32Array, std: number, rand: () => number): void {
  // Box-Muller, two draws per pair
  for (let i = 0; i < out.length; i += 2) {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2.0 * Math.log(u)) * std;
    out[i] = r * Math.cos(2.0 * Math.PI * v);
    if (i + 1 < out.length) {
      out[i + 1] = r * Math.sin(2.0 * Math.PI * v);
    }
  }
}

export function makeFixtureCheckpoint(seed: number): Buffer {
  const rand = mulberry32(seed);
  const entries: Array<{ name: string; shape: number[]; data: Float32Array }> = [];
  for (const layer of TRUNK) {
    const shape = expectedWeightShape(layer);
    const weights = new Float32Array(shape.reduce((a, b) => a * b, 1));
    // He-style scaling keeps activations O(1) through the stack
    fillNormal(weights, Math.sqrt(2.0 / (layer.inChannels * 9)), rand);
    const biases = new Float32Array(layer.outChannels);
    fillNormal(biases, 0.05, rand);
    entries.push({ name: weightKey(layer), shape, data: weights });
    entries.push({ name: biasKey(layer), shape: [layer.outChannels], data: biases });
  }
  // classifier head stub: present in real checkpoints, never converted
  const fc = new Float32Array(8 * 16);
  fillNormal(fc, 0.1, rand);
  entries.push({ name: 'classifier.0.weight', shape: [8, 16], data: fc });
  return writeSafetensors(entries, { fixture: `seed ${seed}` });
}
