/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_confident_size: (a: number) => number;
export const demo_infer: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const demo_iteration: (a: number) => number;
export const demo_new: (a: bigint) => [number, number, number];
export const demo_sweep: (a: number, b: bigint) => [number, number, number, number];
export const demo_test_image: (a: number, b: number) => [number, number];
export const demo_test_len: (a: number) => number;
export const demo_train: (a: number, b: number) => [number, number];
export const flops: () => [number, number, number, number];
export const image_pixels: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
