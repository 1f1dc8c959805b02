/* tslint:disable */
/* eslint-disable */

/**
 * Synthesizes a loss curve and replays the convergence rule over it.
 */
export function convergence_demo(seed: number, points: number, plateau: number, rate: number, noise: number, threshold: number, window: number, patience: number): string;

/**
 * The built-in registry as a JSON array.
 */
export function registry(): string;

/**
 * `constraints` is a JSON `SelectionConstraints`; blank bounds are omitted.
 */
export function select(constraints: string): string;

/**
 * Splits a seeded synthetic detection set and grades each class.
 */
export function split_demo(images: number, classes: number, ratio: string, seed: number): string;

/**
 * Tier for a per-class image count, for the slider readout.
 */
export function tier(images_per_class: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly convergence_demo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly registry: () => [number, number];
    readonly select: (a: number, b: number) => [number, number];
    readonly split_demo: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly tier: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
