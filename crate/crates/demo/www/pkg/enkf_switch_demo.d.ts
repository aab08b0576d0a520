/* tslint:disable */
/* eslint-disable */

/**
 * One bandit-learning run on Lorenz-96.
 *
 * Returns `[arm_0, plays_0, mean_reward_0, arm_1, ...]` followed by the
 * most-played arm as the last element.
 */
export function learn_observed_count(seed: number, n_x: number, cycles: number): Float64Array;

/**
 * Gaspari–Cohn taper between site 0 and every site of a ring of `n_x`.
 */
export function taper_row(r_loc: number, n_x: number): Float64Array;

/**
 * Lorenz-63 tracking with only `z` observed versus one component redrawn
 * at random every step, sharing truth and noise.
 *
 * Returns `[t_0, fixed_0, random_0, t_1, fixed_1, random_1, ...]`, one
 * triple per recorded step, where `fixed`/`random` are the ensemble-mean
 * errors. A diverged run reports `inf` from the blow-up onwards.
 */
export function tracking_errors(seed: number, steps: number, eps: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly learn_observed_count: (a: number, b: number, c: number) => [number, number, number, number];
    readonly taper_row: (a: number, b: number) => [number, number, number, number];
    readonly tracking_errors: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
