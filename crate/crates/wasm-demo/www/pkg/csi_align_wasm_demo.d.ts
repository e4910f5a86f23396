/* tslint:disable */
/* eslint-disable */

/**
 * Allowed cyclic-shift steps for `(N, M, ν)`.
 */
export function allowed_deltas(fft_size: number, num_antennas: number, delay_spread: number): Uint32Array;

/**
 * Per-RS BS-side NMSE of one user at a reduced scale (M=32, N=256,
 * taps {0, 3, 9, 14}). `delta = 0` cycles Δ; `dumb` selects the dumb MS.
 */
export function nmse_curve(dumb: boolean, delta: number, num_rs: number, seed: bigint, snr_db: number): Float64Array;

/**
 * Angular power spectrum `diag(Fᴴ R F)` of a one-ring tap covariance.
 */
export function one_ring_spectrum(aod_deg: number, as_deg: number, num_antennas: number): Float64Array;

/**
 * Noise-free TAC magnitudes `|h̄(i)|` for a random channel on `delays`,
 * truncated to the folded length `MΔ`.
 */
export function tac_magnitude(fft_size: number, num_antennas: number, delta: number, delays: Uint32Array, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly allowed_deltas: (a: number, b: number, c: number) => [number, number, number, number];
    readonly nmse_curve: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number, number];
    readonly one_ring_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
    readonly tac_magnitude: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
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
