/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_heatmap_free: (a: number, b: number) => void;
export const blend_sdr_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_signal: (a: number, b: number, c: number) => [number, number];
export const heatmap_bins: (a: number) => number;
export const heatmap_data: (a: number) => [number, number];
export const heatmap_frames: (a: number) => number;
export const spectrogram_db: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const wiener_panning: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
