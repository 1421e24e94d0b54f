/* tslint:disable */
/* eslint-disable */

/**
 * `seed` is a u32 so the page can pass a plain number.
 */
export function bitflip_preview(hex: string, seed: number, flips: number, defs_json: string): string;

export function demo_defs(): string;

export function dissect_hex(hex: string, defs_json: string): string;

export function encode_header(header_json: string): string;

export function header_bits(hex: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bitflip_preview: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_defs: () => [number, number];
    readonly dissect_hex: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly encode_header: (a: number, b: number) => [number, number, number, number];
    readonly header_bits: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
