/* tslint:disable */
/* eslint-disable */

/**
 * Holds the fixture engine and one chat session.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    greeting(): string;
    constructor(seed: number);
    /**
     * Restarts the chat with a new seed.
     */
    reset(seed: number): void;
    /**
     * JSON array of the top candidates with their score terms.
     */
    score(utterance: string, previous: string, topic: string, k: number): string;
    /**
     * JSON `{reply, component, confidence, topic}`.
     */
    send(utterance: string): string;
    /**
     * Fixture topic labels, JSON array.
     */
    topics(): string;
}

/**
 * The distribution `p^(1/T)` renormalised, as JSON. `probs` need not sum to one.
 */
export function temperature_distribution(probs: Float64Array, temperature: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_greeting: (a: number) => [number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_reset: (a: number, b: number) => void;
    readonly demo_score: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly demo_send: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_topics: (a: number) => [number, number];
    readonly temperature_distribution: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
