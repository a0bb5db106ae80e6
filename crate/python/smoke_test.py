"""Smoke test for the `ttcomp` extension module.

Build first with `cargo build -p ttcomp-py --release` (or without
`--release`). The script imports `ttcomp` if it is already importable,
otherwise it loads the shared library from `target/` or from the path in
`TTCOMP_LIB`.
"""

import importlib.machinery
import importlib.util
import math
import os
import sys
from pathlib import Path


def load():
    try:
        import ttcomp  # noqa: F401

        return sys.modules["ttcomp"]
    except ImportError:
        pass
    root = Path(__file__).resolve().parent.parent
    candidates = [os.environ.get("TTCOMP_LIB")] + [
        str(root / "target" / profile / name)
        for profile in ("release", "debug")
        for name in ("libttcomp.so", "libttcomp.dylib", "ttcomp.dll")
    ]
    for path in filter(None, candidates):
        if Path(path).exists():
            loader = importlib.machinery.ExtensionFileLoader("ttcomp", path)
            spec = importlib.util.spec_from_file_location("ttcomp", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["ttcomp"] = module
            return module
    sys.exit("ttcomp extension not found; run `cargo build -p ttcomp-py` first")


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def close(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b}"


def main():
    tt = load()
    src = tt.SourceModel.bernoulli_iid(2, 0.5)
    mx = tt.TypeThresholdFunction.standard("maximum", 2)

    assert tt.type_vector([0, 2, 2, 1], 3) == [1, 1, 2]
    assert mx.evaluate([0, 1]) == 1
    assert tt.TypeThresholdFunction.standard("heavy_hitters:2", 3).evaluate([2, 2, 1, 0, 0]) == [0, 2]
    assert tt.TypeThresholdFunction.standard("avg_top:2", 4).evaluate([3, 1, 2]) == (5, 2)

    dist = tt.clipped_type_distribution(src, [1, 1])
    close(dist[(1, 1)], 0.5)
    close(tt.function_entropy(mx, src), h2(0.25))
    close(tt.function_entropy(mx, src, [0, 1]), 0.0)

    singles = tt.Partition([[1], [2]])
    e = tt.chain_entropy(src, 1, 1, singles)
    assert e["per_step"] == [1.0, 0.5] and e["total"] == 1.5 and e["bound"] == 14.5
    close(tt.binary_max_entropy_closed_form(64, 0.5, 1), 2.0, 1e-6)
    close(sum(tt.poisson_binomial_pmf([0.2, 0.7, 0.5])), 1.0, 1e-12)

    lemma = tt.Partition.lemma([0.5] * 10, 1)
    assert lemma.groups == [[1, 2], [3, 4], [5, 6], [7, 8], [9, 10]], lemma.groups

    close(tt.cf_rate(4, 100.0), 0.5 * math.log2(0.25 + 100.0))
    ff = tt.mrgb_rate_finite_field(mx, src, [singles, singles], 1.0)
    close(ff["rate_bits_per_channel_use"], 2 / 3)

    # four sensors, two groups of two, equal time, random shift
    four = tt.SourceModel.bernoulli_iid(4, 0.5)
    pairs = tt.Partition.a_partition(4, 2)
    r = tt.mrgb_rate_gaussian(mx, four, [pairs, pairs], 100.0)
    close(r["rate_bits_per_channel_use"], 0.25 * math.log2(0.5 + 200.0) / ((1.5 + 0.375) / 2), 1e-9)
    row = tt.figure4_row(4, 100.0)
    close(row["mrgb_rate"], r["rate_bits_per_channel_use"])

    cut = tt.cutset_bound_gaussian(mx, src, 1.0, [[0, 1]])
    close(cut["rate_bits_per_channel_use"], 0.5 * math.log2(5.0) / h2(0.25))
    assert abs(cut["rate_bits_per_channel_use"] - 1.43103) < 1e-5

    eight = tt.SourceModel.iid(8, [0.4, 0.3, 0.2, 0.1])
    m4 = tt.TypeThresholdFunction.standard("maximum", 4)
    parts = [tt.Partition.lemma(eight.indicator_probs(l), t) for l, t in enumerate(m4.theta)]
    trace = tt.run_protocol(m4, eight, parts, 5000, seed=7, shift="uniform")
    assert trace["mismatches"] == 0 and trace["k"] == 5000
    stages = tt.binary_search_stage_partitions(eight)
    trace = tt.run_protocol(m4, eight, stages, 5000, seed=7, binary_search=True)
    assert trace["mismatches"] == 0

    assert tt.figure3_row(16)["h_sqrt_partition_bits"] < 14.5
    close(tt.irr_upper_bound(2.0, 4, 100.0)["rate_bits_per_channel_use"], 0.25 * math.log2(401.0))

    try:
        tt.SourceModel(2, [[0.3, 0.3]])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid PMF accepted")

    back = tt.SourceModel.from_json(src.to_json())
    assert back.pmfs() == src.pmfs()
    print("python smoke test passed")


if __name__ == "__main__":
    main()
