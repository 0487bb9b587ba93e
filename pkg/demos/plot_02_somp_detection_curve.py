"""
How many devices does S-OMP detect?
===================================

Monte Carlo estimate of the mean number of failed devices U(K) on one RB, next
to the collision-only value K - K (1 - 1/N)^(K-1). The knee of the curve is
the practical recovery threshold D.
"""

from mrbcra import analysis, csmud

L, N, T, snr_db = 32, 256, 640, 20.0

# 20 trials per K keeps this to a few seconds; the acceptance suite uses 100.
curve = csmud.empirical_unsuccessful_curve(L, N, T, snr_db, range(1, 41, 3), trials=20, seed=1)

print(" K   U(K)   +-se   collision-only")
for K, mean, se, _ in curve:
    print(f"{K:2d} {mean:6.2f} {se:6.2f}   {analysis.unsuccessful_mean(K, N, K):6.2f}")

# largest K still within 0.1 K of the collision-only curve
print("estimated D:", csmud.estimate_D(curve, N, slack=0.1))
