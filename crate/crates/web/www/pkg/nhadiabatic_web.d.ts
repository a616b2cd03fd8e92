/* tslint:disable */
/* eslint-disable */

/**
 * Adiabatic error at `s = 1` for each `T` in the JSON array `t_list_json`.
 */
export function adiabatic_sweep(spec_json: string, t_list_json: string, label: number): string;

/**
 * JSON of a built-in path by name, for the page's presets.
 */
export function preset(name: string): string;

/**
 * Eigenvalue curves of `H(s)` with the reality/gap certificate.
 */
export function spectrum_scan(spec_json: string, points: number): string;

/**
 * Evolved state against the adiabatic prediction along the path.
 */
export function state_trajectory(spec_json: string, t: number, label: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly adiabatic_sweep: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly preset: (a: number, b: number) => [number, number];
    readonly spectrum_scan: (a: number, b: number, c: number) => [number, number];
    readonly state_trajectory: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
