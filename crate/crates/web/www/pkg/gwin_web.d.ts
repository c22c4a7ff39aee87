/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    confident_size(): number;
    /**
     * Classify and reject test image `i` and run the generator on it. Returns
     * JSON with the decision, both certainties and the transformed pixels.
     */
    infer(i: number, tau: number, seed: bigint): string;
    iteration(): number;
    /**
     * Builds the data and trains the toy classifier on clean examples.
     */
    constructor(seed: bigint);
    /**
     * Rejection sweep over the test set at the default thresholds.
     */
    sweep(seed: bigint): string;
    test_image(i: number): Float32Array;
    test_len(): number;
    /**
     * Runs `n` generator iterations.
     */
    train(n: number): void;
}

/**
 * FLOP reports for the full-size generator and LeNet-5 classifier.
 */
export function flops(): string;

export function image_pixels(): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_confident_size: (a: number) => number;
    readonly demo_infer: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly demo_iteration: (a: number) => number;
    readonly demo_new: (a: bigint) => [number, number, number];
    readonly demo_sweep: (a: number, b: bigint) => [number, number, number, number];
    readonly demo_test_image: (a: number, b: number) => [number, number];
    readonly demo_test_len: (a: number) => number;
    readonly demo_train: (a: number, b: number) => [number, number];
    readonly flops: () => [number, number, number, number];
    readonly image_pixels: () => number;
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
