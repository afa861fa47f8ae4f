/** Keyboard map: 1-6 pick a category, R/F/X/K pick an action,
 * Z undoes the last verdict, Enter submits. */
import type { SessionState } from "./state.js";

function isTyping(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) return false;
  const tag = target.tagName;
  return tag === "INPUT" || tag === "TEXTAREA" || target.isContentEditable;
}

export function handleKey(state: SessionState, event: KeyboardEvent): void {
  if (event.altKey || event.ctrlKey || event.metaKey) return;
  if (isTyping(event.target)) {
    // the relabel buffer owns the keyboard; Enter still submits
    if (event.key === "Enter") {
      event.preventDefault();
      void state.submit();
    }
    return;
  }
  const key = event.key.toLowerCase();
  if (key >= "1" && key <= "6") {
    state.setCategory(Number(key));
  } else if (key === "r") {
    state.setAction("relabel");
  } else if (key === "f") {
    state.setAction("fix_image");
  } else if (key === "x") {
    state.setAction("remove");
  } else if (key === "k") {
    state.setAction("keep");
  } else if (key === "z") {
    state.undoLast();
  } else if (key === "enter") {
    event.preventDefault();
    void state.submit();
  }
}

export function attachKeyboard(state: SessionState, root: Document): () => void {
  const listener = (event: KeyboardEvent) => handleKey(state, event);
  root.addEventListener("keydown", listener);
  return () => root.removeEventListener("keydown", listener);
}
