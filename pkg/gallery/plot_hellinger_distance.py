"""
Hellinger distance between histograms
=====================================

How the Bhattacharyya coefficient and Hellinger distance respond to
overlap, and why both histograms must share bin edges.
"""

import numpy as np

from devstab import BinningSpec, Histogram, bhattacharyya, build_histograms, hellinger

###############################################################################
# Two-bin distributions (0.5, 0.5) and (0.9, 0.1).

edges = np.array([0.0, 1.0, 2.0])
p = Histogram(edges, np.array([5, 5]))
q = Histogram(edges, np.array([9, 1]))
print("BC  = %.4f" % bhattacharyya(p, q))
print("d_H = %.4f" % hellinger(p, q))

###############################################################################
# Samples drawn from Gaussians whose means drift apart. The distance climbs
# from the finite-sample floor towards 1 once the supports separate.

rng = np.random.default_rng(3)
base = rng.normal(0, 1, 500)
for shift in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0):
    a, b = build_histograms(base, rng.normal(shift, 1, 500))
    print("shift %4.1f  d_H %.3f  bins %d" % (shift, hellinger(a, b), a.counts.size))

###############################################################################
# Binning changes the value. Finer bins raise the floor for identical
# underlying distributions.

x, y = rng.normal(0, 1, 300), rng.normal(0, 1, 300)
for bins in (4, 8, 17, 40):
    print("bins %3d  d_H %.3f" % (bins, hellinger(*build_histograms(x, y, BinningSpec.fixed_count(bins)))))
