/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_soberdemo_free: (a: number, b: number) => void;
export const nystrom_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
export const select_batch: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const soberdemo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const soberdemo_step: (a: number) => [number, number, number, number];
export const surface: (a: number, b: number, c: number) => [number, number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
