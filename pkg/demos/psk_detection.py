"""
Overloaded 8-PSK detection with a constellation-aware projection
================================================================

With more transmit symbols than observations (n > m) the pseudo-inverse
cannot separate the streams, so its symbol error rate saturates.  The
unrolled network replaces the thresholding step with the posterior mean
under the 8-PSK prior, and a few trained scalars per layer are enough to
push both MSE and SER well below zero forcing.
"""

import numpy as np

from ctista.recovery import ctista_batch, zf_detect
from ctista.scenarios import (
    STREAM_EVAL,
    calibrate_noise,
    generate_batch,
    psk8_config,
    realize,
)
from ctista.shrinkage import hard_decision
from ctista.training import train_scenario

# a small copy of the 8-PSK reference scenario (the real one is 200/160)
cfg = psk8_config(n=60, m=48, depth=8, train_k=80, seed=11, train_xi=2e-3)
sc = realize(cfg)

print("training %d layers on the overloaded system ..." % cfg.depth)
report = train_scenario(sc)

print("\n  SNR    MSE trained   MSE zf      SER trained  SER zf")
for snr_db in (10.0, 15.0, 20.0):
    sigma2 = calibrate_noise(sc, snr_db)
    err = {"net": 0.0, "zf": 0.0}
    serr = {"net": 0, "zf": 0}
    n_sym = 0
    for idx in range(6):
        batch = generate_batch(sc, 100, sc.rng(STREAM_EVAL, int(snr_db), idx),
                               sigma2)
        est = {"net": ctista_batch(sc.model, report.params, batch.y),
               "zf": zf_detect(sc.model.w_mat, batch.y)}
        for k, e in est.items():
            err[k] += float(np.sum(np.abs(e - batch.x) ** 2))
            serr[k] += int(np.sum(hard_decision(e, sc.constellation) != batch.x))
        n_sym += batch.x.size
    print("  %4.0f   %.4e    %.4e  %.4e   %.4e"
          % (snr_db, err["net"] / n_sym, err["zf"] / n_sym,
             serr["net"] / n_sym, serr["zf"] / n_sym))

print("\nzero forcing flattens out; the trained network keeps improving")
print("with SNR because the prior carries the missing information.")
