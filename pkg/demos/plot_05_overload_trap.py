"""
The overload trap of the threshold detector model
=================================================

Under the all-or-nothing detector model an RB holding more than D packets
delivers nothing, and fast retrial scatters those packets over the other RBs.
Once *every* RB is above D no packet can ever succeed again, and rate control
(which only blocks new arrivals) cannot drain the system. With few RBs this
happens after a short time even below the stability bound; with many RBs it
is pushed far out. Detection with S-OMP degrades gradually instead, so PHY
runs do not fall into the trap.
"""

from mrbcra import SystemConfig, analysis, sim

base = SystemConfig(L=32, N=320, M=8, T=640, D=25, Kbar=64, lam=15.0, slots=400, seed=0)
ss = analysis.solve_lambda1(base.lam, base.N, base.D)
print(f"analysis: lambda1 = {ss.lambda1:.3f}")

for M in (8, 64):
    m = sim.run(base.replace(M=M), "abstract", warmup_slots=100)
    stuck = next((r.slot for r in m.trace if r.successful == 0 and r.backlog > 0), None)
    print(f"abstract M={M:3d}: mean K {m.mean_K_per_rb:8.3f}, first slot with no delivery: {stuck}")

# S-OMP on synthesised signals (slow: one recovery per RB and slot)
m = sim.run(base.replace(slots=60), "phy", warmup_slots=20)
print(f"phy      M=  8: mean K {m.mean_K_per_rb:8.3f}, delay {m.normalized_delay:.3f}")
