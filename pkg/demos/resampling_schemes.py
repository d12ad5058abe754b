# %% [markdown]
# # Resampling schemes and estimator spread
#
# All four schemes are unbiased; they differ in how much extra noise
# the resampling step itself injects.  Systematic keeps every copy
# count inside its quota interval and the Hilbert-sorted stratified
# variant additionally orders particles along a space-filling curve
# before stratifying.  With adaptive triggering only a handful of
# resample events happen per run, so at desk scale the spread
# differences are modest; the box plot mostly shows the common
# weight-degeneracy noise of the crude potential approximation.

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from diffsmc import NoiseSchedule, SMCConfig, make_mixture6, run_smc_adaptive
from diffsmc.potentials import SimplePotential

mix = make_mixture6()
sched = NoiseSchedule(steps=32)
pot = SimplePotential(mix, sched)

schemes = ("multinomial", "stratified", "systematic", "sorted_stratified")
results = {}
for scheme in schemes:
    cfg = SMCConfig(n_particles=512, resampling=scheme, ess_threshold=0.3)
    results[scheme] = [
        run_smc_adaptive(mix, pot, sched, cfg, seed=s).log_z for s in range(40)
    ]
    vals = np.array(results[scheme])
    print(f"{scheme:>18}: median {np.median(vals):+.3f}  IQR "
          f"{np.subtract(*np.percentile(vals, [75, 25])):.3f}")

# %%
fig, ax = plt.subplots(figsize=(7, 4))
ax.boxplot([results[s] for s in schemes], tick_labels=schemes, showfliers=False)
ax.axhline(0.0, color="k", ls=":")
ax.set_ylabel("log Z estimate over 40 seeds")
ax.set_title("Resampling scheme comparison (shrunk-argument potential)")
fig.tight_layout()
fig.savefig("demos_resampling_schemes.png", dpi=120)
print("wrote demos_resampling_schemes.png")
