import { describe, expect, it } from "vitest";

import { classIndex, quantileBreaks } from "../src/classing.js";

describe("quantile classing", () => {
    it("splits an even spread into five classes", () => {
        const values = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];
        const breaks = quantileBreaks(values);
        expect(breaks).toHaveLength(4);
        [28, 46, 64, 82].forEach((expected, i) => expect(breaks[i]).toBeCloseTo(expected, 9));
        const counts = [0, 0, 0, 0, 0];
        for (const value of values) counts[classIndex(value, breaks)]++;
        expect(counts).toEqual([2, 2, 2, 2, 2]);
    });

    it("handles fewer values than classes", () => {
        const breaks = quantileBreaks([7]);
        expect(breaks).toEqual([7, 7, 7, 7]);
        expect(classIndex(7, breaks)).toBe(0);
        expect(classIndex(9, breaks)).toBe(4);
    });

    it("handles empty input", () => {
        expect(quantileBreaks([])).toEqual([]);
        expect(classIndex(5, [])).toBe(0);
    });

    it("class index is monotone in the value", () => {
        const breaks = quantileBreaks([1, 2, 3, 5, 8, 13, 21, 34]);
        let previous = 0;
        for (const value of [0, 1, 2, 4, 6, 10, 20, 40]) {
            const index = classIndex(value, breaks);
            expect(index).toBeGreaterThanOrEqual(previous);
            previous = index;
        }
    });
});
