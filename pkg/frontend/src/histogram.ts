/**
 * Loss histogram binning: Freedman-Diaconis bin width with a fallback to
 * 20 uniform bins for degenerate spreads (zero IQR). A zero-range sample
 * collapses to a single bin. Bin counts always sum to the sample size.
 */

export interface Histogram {
  edges: number[]; // length counts.length + 1
  counts: number[];
  binWidth: number;
}

const MAX_BINS = 400;
const FALLBACK_BINS = 20;

function lowerQuantile(sorted: number[], level: number): number {
  const index = Math.ceil(level * sorted.length) - 1;
  return sorted[Math.max(index, 0)];
}

export function buildHistogram(values: number[]): Histogram {
  const n = values.length;
  if (n === 0) {
    return { edges: [], counts: [], binWidth: 0 };
  }
  const sorted = [...values].sort((a, b) => a - b);
  const min = sorted[0];
  const max = sorted[n - 1];
  if (min === max) {
    return { edges: [min, max], counts: [n], binWidth: 0 };
  }
  const iqr = lowerQuantile(sorted, 0.75) - lowerQuantile(sorted, 0.25);
  const fdWidth = (2 * iqr) / Math.cbrt(n);
  let bins: number;
  if (fdWidth > 0 && Number.isFinite(fdWidth)) {
    bins = Math.min(Math.max(Math.ceil((max - min) / fdWidth), 1), MAX_BINS);
  } else {
    bins = FALLBACK_BINS;
  }
  const width = (max - min) / bins;
  const counts = new Array<number>(bins).fill(0);
  for (const value of values) {
    const index = Math.min(Math.floor((value - min) / width), bins - 1);
    counts[index] += 1;
  }
  const edges = Array.from({ length: bins + 1 }, (_, i) => min + i * width);
  edges[bins] = max; // guard against float drift on the last edge
  return { edges, counts, binWidth: width };
}

/** Render the histogram as a standalone SVG string (pure). */
export function renderHistogramSvg(
  histogram: Histogram,
  width = 520,
  height = 180,
): string {
  const { counts, edges } = histogram;
  if (counts.length === 0) {
    return `<svg class="histogram" width="${width}" height="${height}"></svg>`;
  }
  const peak = Math.max(...counts, 1);
  const pad = 24;
  const plotW = width - 2 * pad;
  const plotH = height - 2 * pad;
  const barW = plotW / counts.length;
  const bars = counts
    .map((count, i) => {
      const h = (count / peak) * plotH;
      const x = pad + i * barW;
      const y = pad + (plotH - h);
      return (
        `<rect x="${x.toFixed(2)}" y="${y.toFixed(2)}" width="${Math.max(barW - 1, 1).toFixed(2)}"` +
        ` height="${h.toFixed(2)}"><title>[${edges[i].toPrecision(4)}, ${edges[i + 1].toPrecision(4)}): ${count}</title></rect>`
      );
    })
    .join("");
  const axis =
    `<text x="${pad}" y="${height - 4}" class="axis">${edges[0].toPrecision(4)}</text>` +
    `<text x="${width - pad}" y="${height - 4}" class="axis" text-anchor="end">` +
    `${edges[edges.length - 1].toPrecision(4)}</text>`;
  return (
    `<svg class="histogram" width="${width}" height="${height}" role="img">` +
    `${bars}${axis}</svg>`
  );
}
