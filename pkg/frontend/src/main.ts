/** Boot: read connection params from the query string, then hand the page
 * over to SessionState. ?api=...&session=...&tau=... */
import { ReviewClient } from "./api.js";
import { attachKeyboard } from "./keyboard.js";
import { render } from "./render.js";
import { SessionState } from "./state.js";

export function boot(root: HTMLElement, location: Location): SessionState | null {
  const params = new URLSearchParams(location.search);
  const api = params.get("api") ?? "http://127.0.0.1:8765";
  const session = params.get("session");
  const tau = Number(params.get("tau") ?? "0.25");
  if (!session) {
    root.textContent =
      "missing ?session=<id>; start the review service and open " +
      "index.html?api=http://HOST:PORT&session=ID";
    return null;
  }
  const client = new ReviewClient(api, session);
  const state = new SessionState(client, tau);
  state.onChange = () => render(state, root);
  attachKeyboard(state, document);
  void state.load().catch((err) => {
    root.textContent = `failed to load session: ${err}`;
  });
  return state;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app")!, window.location);
}
