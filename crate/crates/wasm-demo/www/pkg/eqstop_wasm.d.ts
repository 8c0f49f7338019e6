/* tslint:disable */
/* eslint-disable */

/**
 * Verdicts for the stopping region `(0, a]` and the value curve to draw.
 */
export function classify_put_ray(mu: number, sigma: number, beta: number, strike: number, a: number): string;

/**
 * Smooth-fit threshold of the put ray next to the closed form `λK/(1+λ)`.
 */
export function put_threshold(mu: number, sigma: number, beta: number, strike: number): string;

/**
 * LHS, RHS and verdict of the sandwich condition for `(a, b, c, d)`.
 */
export function sandwich_check(beta: number, a: number, b: number, c: number, d: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly classify_put_ray: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly put_threshold: (a: number, b: number, c: number, d: number) => [number, number];
    readonly sandwich_check: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
