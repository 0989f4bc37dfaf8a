"""A Kronecker sequence versus iid points: discrepancy and log L / log n."""
import numpy as np

from twincities import experiments as ex
from twincities import process, stats
from twincities.process import ProcessSpec

for n in (256, 1024, 4096):
    k = stats.rectangle_discrepancy(process.kronecker_sequence(n=n), "grid", 64).value
    iid = np.median([stats.rectangle_discrepancy(process.segment(ProcessSpec(s), 0, 0, n - 1), "grid", 64).value
                     for s in range(10)])
    print(f"n = {n:5d}  Kronecker nD = {n * k:7.2f}   iid nD = {n * iid:7.2f}   sqrt(n) = {n ** 0.5:6.1f}")

small = process.kronecker_sequence(n=200)
print("exact vs grid on 200 points:",
      stats.rectangle_discrepancy(small, "exact").value, stats.rectangle_discrepancy(small, "grid", 64).value)

rows = ex.logtsp_diagnostic(process.kronecker_sequence(n=16384), [1, 64, 1024, 16384])
for r in rows:
    print(r)
