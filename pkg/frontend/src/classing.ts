/** Quantile class breaks for choropleth shading. */

export const CLASS_COUNT = 5;

/**
 * Inner break values at quantiles k/classes (linear interpolation between
 * order statistics).  Returns classes-1 breaks; fewer distinct values than
 * classes simply produce repeated breaks.
 */
export function quantileBreaks(values: number[], classes: number = CLASS_COUNT): number[] {
    const sorted = [...values].sort((a, b) => a - b);
    if (sorted.length === 0) return [];
    const breaks: number[] = [];
    for (let k = 1; k < classes; k++) {
        const h = (sorted.length - 1) * (k / classes);
        const lo = Math.floor(h);
        const hi = Math.ceil(h);
        breaks.push(sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo));
    }
    return breaks;
}

/** Index of the class a value falls into: 0..breaks.length. */
export function classIndex(value: number, breaks: number[]): number {
    let i = 0;
    while (i < breaks.length && value > breaks[i]) i++;
    return i;
}
