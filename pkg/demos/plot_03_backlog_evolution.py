"""
Slot-by-slot backlog under fast retrial
=======================================

Simulate the abstract detector model (every device fails when an RB carries
more than D packets, otherwise only code collisions fail) and compare the
time averages with the fixed-point analysis.
"""

import numpy as np

from mrbcra import SystemConfig, analysis, sim

cfg = SystemConfig(L=32, N=320, M=8, T=640, D=25, Kbar=64, lam=12.0, slots=3000, seed=3)
m = sim.run(cfg, "abstract")
ss = analysis.solve_lambda1(cfg.lam, cfg.N, cfg.D)

print(f"mean K per RB   {m.mean_K_per_rb:7.3f}   (analysis lambda1 {ss.lambda1:.3f})")
print(f"normalised delay {m.normalized_delay:6.3f}   (analysis {ss.delay:.3f})")
print(f"per-packet delay {m.mean_packet_delay_slots:6.3f} slots")

# total backlog, sampled every 300 slots
backlog = np.array([r.backlog for r in m.trace])
print("backlog:", backlog[::300].tolist())
