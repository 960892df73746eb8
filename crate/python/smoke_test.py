"""Smoke test for the Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import math

import xfmr_integrity_py as xi

CONFIG = """
[synth]
engine = "analytic"
[scenario]
duration = 0.4
lambda_r = -1.4255576727219696
"""


def main():
    assert abs(xi.threshold(0.01) - 2.5758293035489004) < 1e-9

    t_sim, truth, t, measured = xi.synth(CONFIG)
    assert len(t) == 2001 and len(t_sim) == len(truth)
    assert abs(t[1] - t[0] - 2e-4) < 1e-12

    out = xi.Pipeline(CONFIG).run(t, measured)
    assert len(out["i_est"]) == len(t)
    flags = [f for f in out["flag"] if f is not None]
    assert flags, "no post-warm-up samples"
    rate = sum(flags) / len(flags)
    tail = [abs(a - b) for a, b in zip(out["i_est"][-500:], truth[-49901::100])]
    print(f"samples {len(t)}  flag rate {rate:.4f}  tail error {max(tail):.3f} A")
    assert rate < 0.05
    assert all(math.isfinite(v) for v in out["i_est"])

    unit = xi.Pipeline(CONFIG)
    record, block = unit.push(0.0, 0.1)
    assert record["flag"] is None and len(block) == unit.block_len
    try:
        unit.push(0.0, 0.1)
    except RuntimeError as e:
        print("rejected repeated timestamp:", e)
    else:
        raise AssertionError("repeated timestamp accepted")
    print("ok")


if __name__ == "__main__":
    main()
