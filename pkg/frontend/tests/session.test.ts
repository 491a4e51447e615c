import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { ReviewSession } from "../src/session";
import type { ClientReviewItem, QueueStats } from "../src/types";

function makeItem(id: string): ClientReviewItem {
  return {
    item_id: id,
    scene_id: "s0",
    object_id: "obj0",
    fact_id: null,
    payload: {
      image_url: `/media/s0`,
      image_size: [640, 480],
      boxes: [[10, 10, 60, 60]],
      arrows: [[35, 35, 50, 20]],
      fact_text: `item ${id}`,
    },
  };
}

const STATS: QueueStats = {
  pending: 3, accepted: 0, rejected: 0, skipped: 0, leased: 0, total: 3,
};

/** In-memory fake of the service with controllable connectivity. */
class FakeServer {
  items: ClientReviewItem[] = [makeItem("i1"), makeItem("i2"), makeItem("i3")];
  resolved = new Map<string, string>();
  posts: string[] = [];
  offline = false;

  fetchImpl = async (input: string, init?: RequestInit): Promise<Response> => {
    if (this.offline) throw new TypeError("network down");
    const url = new URL(input, "http://fake");
    if (url.pathname === "/items/next") {
      const item = this.items.find((i) => !this.resolved.has(i.item_id)) ?? null;
      return Response.json({ item, stats: STATS });
    }
    const m = url.pathname.match(/^\/items\/(.+)\/verdict$/);
    if (m) {
      const id = decodeURIComponent(m[1]);
      const body = JSON.parse(String(init?.body ?? "{}"));
      this.posts.push(id);
      if (this.resolved.has(id)) {
        return Response.json({ error: "conflict" }, { status: 409 });
      }
      this.resolved.set(id, body.verdict);
      return Response.json({ item_id: id, status: body.verdict });
    }
    if (url.pathname === "/stats") return Response.json(STATS);
    return Response.json({ error: "not found" }, { status: 404 });
  };
}

describe("ReviewSession", () => {
  let server: FakeServer;
  let session: ReviewSession;

  beforeEach(() => {
    server = new FakeServer();
    session = new ReviewSession(new ApiClient("", server.fetchImpl), "tester");
  });

  it("loads the first pending item", async () => {
    await session.loadNext();
    expect(session.getState().phase).toBe("reviewing");
    expect(session.getState().item?.item_id).toBe("i1");
  });

  it("submits exactly one POST per decision even when spammed", async () => {
    await session.loadNext();
    // Simulate a double-keypress: two submits race on the same item.
    const results = await Promise.all([
      session.submit("accepted"),
      session.submit("accepted"),
    ]);
    expect(results.filter(Boolean)).toHaveLength(1);
    expect(server.posts.filter((id) => id === "i1")).toHaveLength(1);
    expect(server.resolved.get("i1")).toBe("accepted");
  });

  it("advances to the next item after a verdict", async () => {
    await session.loadNext();
    await session.submit("rejected");
    expect(session.getState().item?.item_id).toBe("i2");
  });

  it("reaches the empty state when the queue drains", async () => {
    await session.loadNext();
    await session.submit("accepted");
    await session.submit("accepted");
    await session.submit("skipped");
    expect(session.getState().phase).toBe("empty");
  });

  it("discards the item and advances on conflict", async () => {
    await session.loadNext();
    server.resolved.set("i1", "accepted"); // resolved behind our back
    await session.submit("rejected");
    expect(server.resolved.get("i1")).toBe("accepted"); // unchanged
    expect(session.getState().item?.item_id).toBe("i2");
  });

  it("queues verdicts while offline and flushes on reconnect", async () => {
    await session.loadNext();
    server.offline = true;
    await session.submit("accepted");
    expect(session.getState().phase).toBe("error");
    expect(session.queuedSubmits()).toHaveLength(1);
    expect(server.resolved.size).toBe(0);

    server.offline = false;
    await session.loadNext(); // retry: flush then fetch
    expect(server.resolved.get("i1")).toBe("accepted");
    expect(session.queuedSubmits()).toHaveLength(0);
    expect(session.getState().item?.item_id).toBe("i2");
  });

  it("never double-posts a flushed offline verdict", async () => {
    await session.loadNext();
    server.offline = true;
    await session.submit("skipped");
    server.offline = false;
    await session.loadNext();
    await session.loadNext();
    expect(server.posts.filter((id) => id === "i1")).toHaveLength(1);
  });

  it("ignores submits when nothing is on screen", async () => {
    expect(await session.submit("accepted")).toBe(false);
    expect(server.posts).toHaveLength(0);
  });
});
