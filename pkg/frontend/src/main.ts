import { ApiClient } from "./api";
import { queryElements, render } from "./render";
import { ReviewSession } from "./session";
import type { Verdict } from "./types";

const KEY_VERDICTS: Record<string, Verdict> = {
  a: "accepted",
  r: "rejected",
  s: "skipped",
};

export interface AppHandle {
  session: ReviewSession;
  teardown: () => void;
}

/**
 * Wire the session to the DOM. Keyboard-first: A accepts, R rejects, S skips,
 * Enter retries after an error. Buttons mirror the keys.
 */
export function startApp(
  doc: Document,
  baseUrl: string,
  reviewer: string,
  fetchImpl?: ConstructorParameters<typeof ApiClient>[1],
): AppHandle {
  const api = new ApiClient(baseUrl, fetchImpl);
  const session = new ReviewSession(api, reviewer);
  const els = queryElements(doc);
  session.onChange((state) => render(els, state));

  const onKey = (event: KeyboardEvent) => {
    const key = event.key.toLowerCase();
    if (key in KEY_VERDICTS) {
      void session.submit(KEY_VERDICTS[key]);
    } else if (key === "enter") {
      void session.loadNext();
    }
  };
  doc.addEventListener("keydown", onKey);

  for (const [id, verdict] of Object.entries({
    "btn-accept": "accepted",
    "btn-reject": "rejected",
    "btn-skip": "skipped",
  } as Record<string, Verdict>)) {
    doc.getElementById(id)?.addEventListener("click", () => void session.submit(verdict));
  }

  void session.loadNext();
  return {
    session,
    teardown: () => doc.removeEventListener("keydown", onKey),
  };
}

declare global {
  interface Window {
    __forgeApp?: AppHandle;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && !("__vitest" in globalThis)) {
  const params = new URLSearchParams(window.location.search);
  const reviewer = params.get("reviewer") ?? `reviewer-${Math.floor(Math.random() * 1e6)}`;
  window.addEventListener("DOMContentLoaded", () => {
    window.__forgeApp = startApp(document, "", reviewer);
  });
}
