"""
How the estimators scale
========================

LS factors a dense (M(L+1)-1) x ML matrix, so it grows cubically with the
packet.  The Wiener path is two FFTs and grows almost linearly.  The LS
grid stops at L=1024: L=4096 would need a 16 GiB matrix.
"""
from moac.metrics import loglog_slope, time_estimator

M = 8
w = time_estimator("wiener", [(M, L) for L in (64, 256, 1024, 4096)], reps=5, batch=32)
ls = time_estimator("ls", [(M, L) for L in (64, 128, 256)], reps=3)

for rows in (w, ls):
    for r in rows:
        print(f"{r.estimator:7s} L={r.L:5d}  {r.median_s * 1e3:9.3f} ms/packet  "
              f"{r.bytes_per_s / 1e3:10.0f} KB/s")
    slope = loglog_slope([r.M * r.L for r in rows], [r.median_s for r in rows])
    print(f"  log-log slope {slope:.2f}")
