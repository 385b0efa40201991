/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const extremogramMap: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number) => [number, number, number, number];
export const marginalCurves: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const simulateEpisode: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number, m: number, n: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
