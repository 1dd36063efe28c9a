// Min-max bucket decimation for long series: never drops the first or
// last point of the input, and keeps both extrema inside every bucket,
// so spikes survive display reduction.

export interface Point {
  x: number;
  y: number;
}

export function decimate(points: Point[], maxPoints: number): Point[] {
  if (maxPoints < 4) throw new Error("maxPoints must be >= 4");
  if (points.length <= maxPoints) return points;

  const first = points[0];
  const last = points[points.length - 1];
  const interior = points.slice(1, points.length - 1);
  const buckets = Math.max(1, Math.floor((maxPoints - 2) / 2));
  const size = interior.length / buckets;

  const kept: Point[] = [first];
  for (let b = 0; b < buckets; b++) {
    const lo = Math.floor(b * size);
    const hi = Math.min(interior.length, Math.floor((b + 1) * size));
    if (lo >= hi) continue;
    let min = interior[lo];
    let max = interior[lo];
    for (let i = lo + 1; i < hi; i++) {
      if (interior[i].y < min.y) min = interior[i];
      if (interior[i].y > max.y) max = interior[i];
    }
    // emit in time order; a single point when min === max
    if (min === max) {
      kept.push(min);
    } else if (min.x <= max.x) {
      kept.push(min, max);
    } else {
      kept.push(max, min);
    }
  }
  kept.push(last);
  return kept;
}
