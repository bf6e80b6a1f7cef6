#!/usr/bin/env node
/**
 * VGG-19 checkpoint converter: reads a safetensors file holding the
 * torch-style `features.N.{weight,bias}` tensors and writes the engine's
 * NMRF v1 weight bank with all sixteen trunk conv layers.
 *
 * Usage:
 *   nmrf-convert <source.safetensors> <out.nmrf> [options]
 *   nmrf-convert --fixture <out.safetensors> [--seed N]
 *
 * Options:
 *   --manifest <path>       Also write a conversion manifest (JSON)
 *   --input-order rgb|bgr   Channel order the source's conv1_1 expects
 *                           (default rgb: reorder to the engine's BGR input)
 *   --fixture <path>        Write a deterministic full-shape test checkpoint
 *   --seed <n>              Fixture seed (default 7)
 *   --help, -h              Show this help
 */
import { readFileSync, writeFileSync } from 'node:fs';
import { resolve } from 'node:path';
import { makeFixtureCheckpoint } from './fixture.js';
import { LayerTensors, serializeLayers, sha256Hex } from './nmrf.js';
import { parseSafetensors, readFloat32 } from './safetensors.js';
import {
  TRUNK,
  biasKey,
  expectedWeightShape,
  flipInputChannels,
  weightKey,
} from './vgg.js';

interface ConvertOptions {
  source: string;
  output: string;
  manifest: string | null;
  inputOrder: 'rgb' | 'bgr';
  fixture: string | null;
  seed: number;
  help: boolean;
}

function parseArgs(argv: string[]): ConvertOptions {
  const opts: ConvertOptions = {
    source: '',
    output: '',
    manifest: null,
    inputOrder: 'rgb',
    fixture: null,
    seed: 7,
    help: false,
  };
  let positional = 0;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    switch (arg) {
      case '--help':
      case '-h':
        opts.help = true;
        break;
      case '--manifest':
        opts.manifest = argv[++i] ?? null;
        break;
      case '--input-order': {
        const value = argv[++i];
        if (value !== 'rgb' && value !== 'bgr') {
          throw new Error(`--input-order must be rgb or bgr, got ${value}`);
        }
        opts.inputOrder = value;
        break;
      }
      case '--fixture':
        opts.fixture = argv[++i] ?? null;
        break;
      case '--seed':
        opts.seed = parseInt(argv[++i] ?? '7', 10);
        break;
      default:
        if (arg.startsWith('-')) {
          throw new Error(`unknown option ${arg}`);
        }
        if (positional === 0) {
          opts.source = arg;
        } else if (positional === 1) {
          opts.output = arg;
        } else {
          throw new Error(`unexpected argument ${arg}`);
        }
        positional++;
        break;
    }
  }
  return opts;
}

function printHelp(): void {
  console.log(`
nmrf-convert - produce the engine's NMRF v1 weight bank from a VGG-19
safetensors checkpoint (torch "features.N" tensor naming).

Usage:
  nmrf-convert <source.safetensors> <out.nmrf> [--manifest m.json] [--input-order rgb|bgr]
  nmrf-convert --fixture <out.safetensors> [--seed N]

The converter emits exactly the sixteen 3x3 conv layers of the trunk in
network order, re-ordered out-major so the loader performs no permutation.
Classifier (fully-connected) tensors are never emitted. With the default
--input-order rgb, conv1_1's input channels are reordered to match the
engine's blue-green-red input planes.
`);
}

export interface ConversionSummary {
  layers: Array<{ name: string; source: string; shape: number[] }>;
  outputSha256: string;
  sourceSha256: string;
  byteSize: number;
}

export function convertCheckpoint(
  sourceBytes: Buffer,
  inputOrder: 'rgb' | 'bgr'
): { bank: Buffer; summary: ConversionSummary } {
  const file = parseSafetensors(sourceBytes);
  const layers: LayerTensors[] = [];
  const manifest: ConversionSummary['layers'] = [];

  for (const layer of TRUNK) {
    const wKey = weightKey(layer);
    const bKey = biasKey(layer);
    if (!file.tensors.has(wKey) || !file.tensors.has(bKey)) {
      throw new Error(`missing layer ${layer.name} (${wKey} / ${bKey})`);
    }
    const expected = expectedWeightShape(layer);
    const actual = file.tensors.get(wKey)!.shape;
    if (actual.length !== 4 || expected.some((d, i) => actual[i] !== d)) {
      throw new Error(
        `layer ${layer.name}: unexpected shape [${actual.join(', ')}], ` +
        `expected [${expected.join(', ')}]`
      );
    }
    let weights = readFloat32(file, wKey);
    if (layer.name === 'conv1_1' && inputOrder === 'rgb') {
      weights = flipInputChannels(weights, layer.outChannels);
    }
    const biases = readFloat32(file, bKey);
    if (biases.length !== layer.outChannels) {
      throw new Error(
        `layer ${layer.name}: ${biases.length} biases, expected ${layer.outChannels}`
      );
    }
    layers.push({
      name: layer.name,
      outChannels: layer.outChannels,
      inChannels: layer.inChannels,
      kernelH: 3,
      kernelW: 3,
      weights,
      biases,
    });
    manifest.push({ name: layer.name, source: `features.${layer.sourceIndex}`, shape: expected });
  }

  const bank = serializeLayers(layers);
  return {
    bank,
    summary: {
      layers: manifest,
      outputSha256: sha256Hex(bank),
      sourceSha256: sha256Hex(sourceBytes),
      byteSize: bank.length,
    },
  };
}

function channelOrderNote(inputOrder: 'rgb' | 'bgr'): string {
  return inputOrder === 'rgb'
    ? "conv1_1 input channels reordered RGB->BGR to match the engine's input planes"
    : 'source conv1_1 already expects BGR input; copied unchanged';
}

function main(): void {
  let opts: ConvertOptions;
  try {
    opts = parseArgs(process.argv.slice(2));
  } catch (error) {
    console.error(`Error: ${(error as Error).message}`);
    process.exit(2);
  }

  if (opts.help) {
    printHelp();
    process.exit(0);
  }

  if (opts.fixture) {
    const out = resolve(opts.fixture);
    const bytes = makeFixtureCheckpoint(opts.seed);
    writeFileSync(out, bytes);
    console.log(`wrote fixture checkpoint ${out} (${bytes.length} bytes, seed ${opts.seed})`);
    process.exit(0);
  }

  if (!opts.source || !opts.output) {
    console.error('Error: <source.safetensors> and <out.nmrf> are required');
    printHelp();
    process.exit(2);
  }

  let sourceBytes: Buffer;
  try {
    sourceBytes = readFileSync(resolve(opts.source));
  } catch {
    console.error(`Error: cannot read ${opts.source}`);
    process.exit(2);
  }

  try {
    const { bank, summary } = convertCheckpoint(sourceBytes, opts.inputOrder);
    for (const layer of summary.layers) {
      console.log(`${layer.name.padEnd(8)} ${layer.shape.join('x').padEnd(12)} (${layer.source})`);
    }
    writeFileSync(resolve(opts.output), bank);
    console.log(
      `wrote ${opts.output}  ${summary.layers.length} layers  ` +
      `${summary.byteSize} bytes  sha256 ${summary.outputSha256}`
    );
    if (opts.manifest) {
      const manifest = {
        source: { path: resolve(opts.source), sha256: summary.sourceSha256 },
        output: { path: resolve(opts.output), format: 'NMRF v1', sha256: summary.outputSha256 },
        inputOrder: opts.inputOrder,
        channelOrder: channelOrderNote(opts.inputOrder),
        layers: summary.layers,
      };
      writeFileSync(resolve(opts.manifest), JSON.stringify(manifest, null, 2) + '\n');
      console.log(`wrote manifest ${opts.manifest}`);
    }
  } catch (error) {
    console.error(`Conversion failed: ${(error as Error).message}`);
    process.exit(1);
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${resolve(process.argv[1])}`).href;

if (invokedDirectly) {
  main();
}
