"""Learn a patch dictionary from a synthetic texture.

Extracts sliding-window patches from a quasi-periodic texture, runs the
ADMM factorization for a few sparsity weights, prints the trade-off table
used to pick the weight, and saves the learned atoms as an image mosaic.

Run:  python demos/02_dictionary_learning.py        (~1 minute)
Outputs land in demos/output/.
"""

from pathlib import Path

import numpy as np

from tomodict import dict_learn as dl
from tomodict.patch_image import extract_training_patches, save_pgm
from tomodict.tensor_core import norms, tprod
from tomodict.textures import woven_texture

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

p = r = 8
train = woven_texture(64, 64, period=8, seed=0)
save_pgm(OUT / "training_texture.pgm", train)
Y = extract_training_patches(train, p, r, stride=4, max_patches=200, seed=0)
print(f"training tensor: {Y.shape[0]}x{Y.shape[1]}x{Y.shape[2]} "
      f"({Y.shape[1]} patches of {p}x{r})")

results = {}
print(f"\n{'lambda':>8} {'misfit':>10} {'|H|_sum':>10} {'criterion':>12} "
      f"{'iters':>6} {'H-density%':>10}")
for lam in (0.03, 0.1, 0.3, 1.0):
    cfg = dl.DictLearnConfig(s=32, lam=lam, rho=1.0, eps=1e-4, max_iter=600, seed=0)
    res = dl.learn_dictionary(Y, cfg)
    misfit = float(np.linalg.norm(Y - tprod(res.D, res.H)))
    h_sum = norms(res.H).sum
    crit = h_sum**2 + misfit**2
    dens = 100.0 * np.count_nonzero(res.H) / res.H.size
    results[lam] = (crit, res)
    print(f"{lam:>8} {misfit:>10.3f} {h_sum:>10.2f} {crit:>12.2f} "
          f"{res.iterations:>6} {dens:>10.1f}")

lam_star = min(results, key=lambda k: results[k][0])
print(f"\nselected sparsity weight (min |H|_sum^2 + misfit^2): {lam_star}")
D = results[lam_star][1].D

# atoms as a mosaic, sorted by variance like a contact sheet
order = np.argsort([D[:, i, :].var() for i in range(D.shape[1])])
cols = 8
rows = int(np.ceil(D.shape[1] / cols))
mosaic = np.zeros((rows * (p + 1) + 1, cols * (r + 1) + 1))
for rank, i in enumerate(order):
    atom = D[:, i, :]
    lo, hi = atom.min(), atom.max()
    atom = (atom - lo) / (hi - lo) if hi > lo else atom * 0
    u, v = divmod(rank, cols)
    mosaic[u * (p + 1) + 1 : u * (p + 1) + 1 + p,
           v * (r + 1) + 1 : v * (r + 1) + 1 + r] = atom
save_pgm(OUT / "dictionary_atoms.pgm", mosaic)
print(f"atom mosaic written to {OUT / 'dictionary_atoms.pgm'}")

hist = results[lam_star][1].objective_history
print(f"objective: {hist[0]:.2f} (first iteration) -> {hist[-1]:.2f} (last)")
