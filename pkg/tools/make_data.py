"""Regenerate the bundled traces, fleet files and scenarios in src/derreg/data."""

from pathlib import Path

from derreg.fleet import testbed_fleet, write_fleet
from derreg.signal import synthetic_building, synthetic_pv, synthetic_regd, write_trace

DATA = Path(__file__).resolve().parents[1] / "src" / "derreg" / "data"

SCENARIO = """\
# Test {test} analog: {counts}
[scenario]
name = test{test}
fleet = test{test}_fleet.csv
regd = regd.csv
pv = pv.csv
building = building.csv
beta = 0.75
seed = 0

[solver]
algorithm = all
budget = 500
topology = ring
informed = 8

[costs]
# a, b of f(p) = a p^2 + b p per DER type; stage-1 DERs are cheapest
AHU = 0.05, 0
V1G = 0.1, 0
V2G = 1.0, 0
BESS = 1.0, 0

[fleet]
upscale = {upscale}
stage = {stage}
stage1 = AHU

[measure]
window = 4
outlier_fraction = 0.5
filtered = AHU, V1G

[metrics]
max_shift = 300
clip_delay = false

[market]
capability_credit = 135
performance_credit = 11
"""


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    write_trace(synthetic_regd(), DATA / "regd.csv")
    write_trace(synthetic_pv(), DATA / "pv.csv")
    write_trace(synthetic_building(), DATA / "building.csv")
    for test, upscale, stage in ((0, 1.0, "single"), (1, 2.0, "single"), (2, 1.0, "two")):
        fleet = testbed_fleet(test)
        write_fleet(fleet, DATA / f"test{test}_fleet.csv")
        counts = ", ".join(f"{n} {t}" for t, n in fleet.counts().items())
        text = SCENARIO.format(test=test, counts=counts, upscale=upscale, stage=stage)
        (DATA / f"test{test}.scenario").write_text(text)


if __name__ == "__main__":
    main()
