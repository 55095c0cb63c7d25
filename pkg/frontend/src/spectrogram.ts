// Client-side spectrogram matching the backend definition bin for bin:
// full frames, Hamming window, magnitude rFFT, dB re the global maximum
// with a -120 dB floor. Parity with the backend is pinned by a golden-clip
// test (per-cell difference well under 0.5 dB).

export const FRAME_LENGTH = 1024;
export const HOP = 512;
export const DB_FLOOR_RATIO = 1e-6; // 20*log10 -> -120 dB

export function hamming(n: number): Float64Array {
  const w = new Float64Array(n);
  for (let i = 0; i < n; i++) w[i] = 0.54 - 0.46 * Math.cos((2 * Math.PI * i) / (n - 1));
  return w;
}

/** In-place iterative radix-2 FFT over interleaved re/im arrays. */
export function fftRadix2(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if ((n & (n - 1)) !== 0) throw new Error(`FFT size ${n} is not a power of two`);
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang);
    const wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k];
        const uIm = im[i + k];
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
        re[i + k] = uRe + vRe;
        im[i + k] = uIm + vIm;
        re[i + k + len / 2] = uRe - vRe;
        im[i + k + len / 2] = uIm - vIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

export function int16ToFloat(pcm: Int16Array): Float64Array {
  const out = new Float64Array(pcm.length);
  for (let i = 0; i < pcm.length; i++) out[i] = pcm[i] / 32768;
  return out;
}

export function decodePcm16Base64(b64: string): Int16Array {
  let bytes: Uint8Array;
  if (typeof atob === "function") {
    const bin = atob(b64);
    bytes = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) bytes[i] = bin.charCodeAt(i);
  } else {
    bytes = new Uint8Array(Buffer.from(b64, "base64"));
  }
  return new Int16Array(bytes.buffer, bytes.byteOffset, bytes.byteLength / 2);
}

/** Magnitude frames (rows) over the rFFT bin range, before dB conversion. */
export function stftMagnitudes(
  samples: Float64Array,
  frameLength = FRAME_LENGTH,
  hop = HOP,
): Float64Array[] {
  if (samples.length < frameLength) return [];
  const window = hamming(frameLength);
  const nFrames = 1 + Math.floor((samples.length - frameLength) / hop);
  const frames: Float64Array[] = [];
  for (let f = 0; f < nFrames; f++) {
    const re = new Float64Array(frameLength);
    const im = new Float64Array(frameLength);
    for (let i = 0; i < frameLength; i++) re[i] = samples[f * hop + i] * window[i];
    fftRadix2(re, im);
    const mags = new Float64Array(frameLength / 2 + 1);
    for (let k = 0; k <= frameLength / 2; k++) mags[k] = Math.hypot(re[k], im[k]);
    frames.push(mags);
  }
  return frames;
}

export function magnitudesToDb(frames: Float64Array[]): Float64Array[] {
  let ref = 0;
  for (const row of frames) for (const v of row) if (v > ref) ref = v;
  return frames.map((row) => {
    const out = new Float64Array(row.length);
    for (let i = 0; i < row.length; i++) {
      out[i] = ref > 0 ? 20 * Math.log10(Math.max(row[i] / ref, DB_FLOOR_RATIO)) : -120;
    }
    return out;
  });
}

export function spectrogramDb(
  samples: Float64Array,
  frameLength = FRAME_LENGTH,
  hop = HOP,
): Float64Array[] {
  return magnitudesToDb(stftMagnitudes(samples, frameLength, hop));
}
