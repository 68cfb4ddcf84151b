/* tslint:disable */
/* eslint-disable */

/**
 * KL and mean entropy at every smoothing mass for a phase-1 model on a
 * synthetic world, plus the entropy-matched mass.
 */
export function alpha_sweep(tau_gen: number, seed: number): string;

/**
 * Softmax, temperature-scaled (logits times `scale`) and smoothed
 * distributions of `logits`, with their entropies.
 */
export function calibrate(logits: Float64Array, scale: number, alpha: number, mode: string): string;

/**
 * Entropy histograms of the true distributions, the phase-1 model, the
 * temperature-scaled phase-1 model and the multi-annotation model.
 */
export function entropy_histograms(tau_gen: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly alpha_sweep: (a: number, b: number) => [number, number, number, number];
    readonly calibrate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly entropy_histograms: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
