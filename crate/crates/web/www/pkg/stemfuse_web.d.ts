/* tslint:disable */
/* eslint-disable */

/**
 * Log-magnitude spectrogram, frames × bins, row-major.
 */
export class Heatmap {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Values in dB, floored at -120.
     */
    data(): Float64Array;
    readonly bins: number;
    readonly frames: number;
}

export function blend_sdr_curve(shared: number, residual: number, steps: number, seed: number): Float64Array;

/**
 * A mono test signal: a low tone, a vibrato tone, a click train and noise.
 */
export function demo_signal(seconds: number, sample_rate: number, seed: number): Float64Array;

export function spectrogram_db(signal: Float64Array, sample_rate: number, fft_size: number, hop: number): Heatmap;

/**
 * `[left share a, left share b, error a (dB), error b (dB)]`.
 */
export function wiener_panning(pan_a: number, pan_b: number, confusion: number, iterations: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_heatmap_free: (a: number, b: number) => void;
    readonly blend_sdr_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_signal: (a: number, b: number, c: number) => [number, number];
    readonly heatmap_bins: (a: number) => number;
    readonly heatmap_data: (a: number) => [number, number];
    readonly heatmap_frames: (a: number) => number;
    readonly spectrogram_db: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly wiener_panning: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
