export type Verdict = "accepted" | "rejected" | "skipped";

export interface ClientReviewItem {
  item_id: string;
  scene_id: string;
  object_id: string | null;
  fact_id: string | null;
  payload: {
    image_url: string;
    image_size: [number, number];
    boxes: number[][]; // [x_min, y_min, x_max, y_max] in image pixels
    arrows: number[][]; // [x0, y0, x1, y1] in image pixels
    fact_text: string;
  };
}

export interface QueueStats {
  pending: number;
  accepted: number;
  rejected: number;
  skipped: number;
  leased: number;
  total: number;
}

export interface NextItemResponse {
  item: ClientReviewItem | null;
  stats: QueueStats;
}
