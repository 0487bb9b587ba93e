"""
Closed-form capacity of MRB-CRA
===============================

How many packets per slot can one resource block sustain, and how does that
change with the recovery threshold D and the code pool size N?
"""

import numpy as np

from mrbcra import analysis

# The headline setup: L = 32 subcarriers per RB, eta = 10 so N = 320 codes,
# and a detector that recovers up to D = 25 devices.
N, D = 320, 25
report = analysis.capacity_report(N, D)
print(report)

# lambda_max is the largest arrival rate with a steady state; B_{D,N} is the
# sufficient stability bound and N_star the smallest pool that keeps the
# upper estimate of lambda_max under it.
print(f"lambda_max = {report.lambda_max:.3f} at lambda1* = {report.lambda1_star:.3f}")

# Steady state just under capacity: total transmission rate and delay.
for lam in (8.0, 12.0, 15.0, 16.0):
    ss = analysis.solve_lambda1(lam, N, D)
    print(f"lambda={lam:5.1f}  lambda1={ss.lambda1:7.3f}  delay={ss.delay:.4f}")

# Which D is needed for a target rate of 20 packets / slot / RB?
Ds = np.arange(20, 40)
caps = np.array([analysis.lambda_max(N, int(d))[0] for d in Ds])
print("smallest D with lambda_max >= 20:", int(Ds[np.argmax(caps >= 20)]))

# Against multichannel ALOHA the throughput gain is e^(1 - 1/eta).
for eta in (2, 3.258, 10):
    print(f"eta={eta:6}: CRA / ALOHA = {analysis.cra_aloha_advantage(eta):.4f}")
