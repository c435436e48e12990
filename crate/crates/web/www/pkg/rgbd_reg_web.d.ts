/* tslint:disable */
/* eslint-disable */

/**
 * A generated pair with its descriptors and correspondences computed once.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * RGBA bytes of input view 0 or 1.
     */
    frame_rgba(view: number): Uint8Array;
    height(): number;
    /**
     * Loss terms at one offset, as JSON.
     */
    loss_at(offset_deg: number, joint: boolean): string;
    /**
     * Loss terms at `steps` offsets evenly spaced in `[-max_deg, max_deg]`, as JSON.
     */
    loss_curve(max_deg: number, steps: number, joint: boolean): string;
    /**
     * Generates a room scene and matches its two views.
     */
    constructor(seed: number, rot_deg: number, trans_m: number);
    /**
     * Registers the pair and returns errors and losses as JSON.
     */
    register(subsets: number, randomized: boolean, seed: number): string;
    /**
     * RGBA of view 1 rendered from view 0's points under the ground truth
     * rotated by `offset_deg`.
     */
    render_offset(offset_deg: number, joint: boolean): Uint8Array;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_frame_rgba: (a: number, b: number) => [number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_loss_at: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_loss_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_register: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_render_offset: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_width: (a: number) => number;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
