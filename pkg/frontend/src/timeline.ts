// Viseme timeline playback: the wire carries [[viseme, start, dur], ...]
// with gapless starts; the player answers "which mouth pose at time t".

export type Viseme =
  "Round" | "Open" | "Closed" | "LipTeeth" | "Rest" | "Silence";

export interface TimelineEntry {
  viseme: Viseme;
  start: number;
  dur: number;
}

export interface Timeline {
  totalMs: number;
  entries: TimelineEntry[];
}

export function parseTimeline(raw: unknown): Timeline {
  const doc = raw as { total_ms?: number; entries?: unknown[] };
  const entries: TimelineEntry[] = [];
  for (const e of doc?.entries ?? []) {
    const [viseme, start, dur] = e as [Viseme, number, number];
    entries.push({ viseme, start, dur });
  }
  return { totalMs: doc?.total_ms ?? 0, entries };
}

export class TimelinePlayer {
  constructor(private readonly timeline: Timeline) {}

  get totalMs(): number {
    return this.timeline.totalMs;
  }

  get done(): boolean {
    return this.timeline.entries.length === 0;
  }

  /** Mouth pose at offset t (ms); Rest before 0 and at/after the end. */
  at(t: number): Viseme {
    const es = this.timeline.entries;
    if (t < 0 || es.length === 0 || t >= this.timeline.totalMs) {
      return "Rest";
    }
    let lo = 0;
    let hi = es.length - 1;
    while (lo < hi) {
      const mid = (lo + hi + 1) >> 1;
      if (es[mid].start <= t) lo = mid;
      else hi = mid - 1;
    }
    return es[lo].viseme;
  }
}
