/* tslint:disable */
/* eslint-disable */

/**
 * One optimisation run held across calls from the page.
 */
export class SoberDemo {
    free(): void;
    [Symbol.dispose](): void;
    constructor(_function: string, batch_size: number, seed: number);
    /**
     * Runs one ask/evaluate/tell round.
     */
    step(): string;
}

export function nystrom_spectrum(m: number, lengthscale: number, seed: number): string;

export function select_batch(n_points: number, n: number, lengthscale: number, seed: number): string;

/**
 * Objective values on a `res × res` grid, row-major from `y = 0`.
 */
export function surface(_function: string, res: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_soberdemo_free: (a: number, b: number) => void;
    readonly nystrom_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
    readonly select_batch: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly soberdemo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly soberdemo_step: (a: number) => [number, number, number, number];
    readonly surface: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
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
