/**
 * The VGG-19 convolutional trunk: sixteen 3x3 conv layers in network order,
 * each tied to its index in the torch-style `features.N` module list.
 * Fully-connected classifier tensors never appear here and are never emitted.
 */

export interface TrunkLayer {
  name: string;
  /** index inside the source checkpoint's `features` sequential module */
  sourceIndex: number;
  inChannels: number;
  outChannels: number;
}

export const KERNEL_SIZE = 3;

export const TRUNK: readonly TrunkLayer[] = [
  { name: 'conv1_1', sourceIndex: 0, inChannels: 3, outChannels: 64 },
  { name: 'conv1_2', sourceIndex: 2, inChannels: 64, outChannels: 64 },
  { name: 'conv2_1', sourceIndex: 5, inChannels: 64, outChannels: 128 },
  { name: 'conv2_2', sourceIndex: 7, inChannels: 128, outChannels: 128 },
  { name: 'conv3_1', sourceIndex: 10, inChannels: 128, outChannels: 256 },
  { name: 'conv3_2', sourceIndex: 12, inChannels: 256, outChannels: 256 },
  { name: 'conv3_3', sourceIndex: 14, inChannels: 256, outChannels: 256 },
  { name: 'conv3_4', sourceIndex: 16, inChannels: 256, outChannels: 256 },
  { name: 'conv4_1', sourceIndex: 19, inChannels: 256, outChannels: 512 },
  { name: 'conv4_2', sourceIndex: 21, inChannels: 512, outChannels: 512 },
  { name: 'conv4_3', sourceIndex: 23, inChannels: 512, outChannels: 512 },
  { name: 'conv4_4', sourceIndex: 25, inChannels: 512, outChannels: 512 },
  { name: 'conv5_1', sourceIndex: 28, inChannels: 512, outChannels: 512 },
  { name: 'conv5_2', sourceIndex: 30, inChannels: 512, outChannels: 512 },
  { name: 'conv5_3', sourceIndex: 32, inChannels: 512, outChannels: 512 },
  { name: 'conv5_4', sourceIndex: 34, inChannels: 512, outChannels: 512 },
];

export function weightKey(layer: TrunkLayer): string {
  return `features.${layer.sourceIndex}.weight`;
}

export function biasKey(layer: TrunkLayer): string {
  return `features.${layer.sourceIndex}.bias`;
}

export function expectedWeightShape(layer: TrunkLayer): number[] {
  return [layer.outChannels, layer.inChannels, KERNEL_SIZE, KERNEL_SIZE];
}

/**
 * Reorder conv1_1's input channels from the checkpoint's RGB to the
 * engine's BGR input planes. Weight layout is out-major
 * [out][in][ky][kx], so each input-channel block is kernelArea floats.
 */
export function flipInputChannels(weights: Float32Array, outChannels: number): Float32Array {
  const kernelArea = KERNEL_SIZE * KERNEL_SIZE;
  const perOut = 3 * kernelArea;
  if (weights.length !== outChannels * perOut) {
    throw new Error('flipInputChannels expects a 3-input-channel kernel block');
  }
  const out = new Float32Array(weights.length);
  for (let o = 0; o < outChannels; o++) {
    for (let c = 0; c < 3; c++) {
      const src = o * perOut + c * kernelArea;
      const dst = o * perOut + (2 - c) * kernelArea;
      out.set(weights.subarray(src, src + kernelArea), dst);
    }
  }
  return out;
}
