// @vitest-environment jsdom
import { describe, expect, it, vi } from "vitest";
import { handleKey } from "../src/keyboard.js";
import type { SessionState } from "../src/state.js";

function recorder() {
  const calls: string[] = [];
  const state = {
    setCategory: (i: number) => calls.push(`cat:${i}`),
    setAction: (a: string) => calls.push(`act:${a}`),
    undoLast: () => calls.push("undo"),
    submit: vi.fn(async () => {
      calls.push("submit");
      return true;
    }),
  } as unknown as SessionState;
  return { state, calls };
}

function key(k: string, target?: EventTarget): KeyboardEvent {
  const event = new KeyboardEvent("keydown", { key: k, cancelable: true });
  if (target) Object.defineProperty(event, "target", { value: target });
  return event;
}

describe("keyboard map", () => {
  it("1-6 select categories, letters select actions", () => {
    const { state, calls } = recorder();
    for (const k of ["1", "6", "r", "f", "x", "k", "z"]) handleKey(state, key(k));
    expect(calls).toEqual([
      "cat:1",
      "cat:6",
      "act:relabel",
      "act:fix_image",
      "act:remove",
      "act:keep",
      "undo",
    ]);
  });

  it("Enter submits", () => {
    const { state, calls } = recorder();
    handleKey(state, key("Enter"));
    expect(calls).toEqual(["submit"]);
  });

  it("ignores shortcuts while typing in the relabel buffer", () => {
    const { state, calls } = recorder();
    const input = document.createElement("input");
    for (const k of ["1", "x", "z"]) handleKey(state, key(k, input));
    expect(calls).toEqual([]);
    handleKey(state, key("Enter", input));
    expect(calls).toEqual(["submit"]);
  });

  it("ignores chorded keys", () => {
    const { state, calls } = recorder();
    const event = new KeyboardEvent("keydown", { key: "1", ctrlKey: true });
    handleKey(state, event);
    expect(calls).toEqual([]);
  });
});
