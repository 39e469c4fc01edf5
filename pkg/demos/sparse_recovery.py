"""
Sparse complex recovery: pseudo-inverse, message passing, trained network
=========================================================================

An underdetermined system y = Ax + w with a Bernoulli-Gaussian x has three
natural solvers here: the zero-forcing estimate Wy, message passing on the
widened real system, and the unrolled thresholding network whose 3T scalars
we train per layer.  This script runs all three on a small instance of the
problem and prints NMSE per iteration, which is the curve the trained
network is supposed to bend downward.
"""

import numpy as np

from ctista.baselines import AmpConfig, widened_amp_recover
from ctista.recovery import ctista_batch, zf_detect
from ctista.scenarios import (
    STREAM_EVAL,
    NmseAccumulator,
    calibrate_noise,
    cs_sparse_config,
    generate_batch,
    realize,
)
from ctista.training import train_scenario

# a reduced copy of the reference scenario so training takes seconds
cfg = cs_sparse_config(n=100, m=50, depth=8, train_k=60, train_xi=0.01, seed=31)
sc = realize(cfg)
sigma2 = calibrate_noise(sc)

print("training %d layers (%d steps each) ..." % (cfg.depth, cfg.train_k))
report = train_scenario(sc)
print("gradient engine: %s" % report.gradient_mode)

# fresh evaluation data from the held-out stream
trials = 400
amp_cfg = AmpConfig(iterations=cfg.depth, p=cfg.p, nonzero_var=cfg.sigma_x2,
                    noise_var=sigma2)

acc = {name: [NmseAccumulator() for _ in range(cfg.depth)]
       for name in ("trained", "amp")}
acc_zf = NmseAccumulator()
done, idx = 0, 0
while done < trials:
    size = min(100, trials - done)
    batch = generate_batch(sc, size, sc.rng(STREAM_EVAL, idx), sigma2)
    iterates = ctista_batch(sc.model, report.params, batch.y,
                            collect_iterates=True)
    for t in range(cfg.depth):
        acc["trained"][t].add(iterates[t], batch.x)
    for j in range(size):
        _, per_iter = widened_amp_recover(sc.a_mat, batch.y[:, j], amp_cfg)
        for t in range(cfg.depth):
            acc["amp"][t].add(per_iter[t], batch.x[:, j])
    acc_zf.add(zf_detect(sc.model.w_mat, batch.y), batch.x)
    done += size
    idx += 1

print("\nNMSE (dB) over %d trials:" % trials)
print("  iter   trained       amp")
for t in range(cfg.depth):
    print("  %4d  %8.2f  %8.2f"
          % (t + 1, acc["trained"][t].db(), acc["amp"][t].db()))
print("  (zero forcing, iteration-free: %.2f dB)" % acc_zf.db())
