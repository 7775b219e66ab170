"""Compare the point-sampling strategies on one synthetic cloud.

Runs uniform random, farthest-point, inverse-density, and Poisson-disk
sampling on the same 20k-point cloud, times each, and shows what fraction of
a sparse outlier cluster each strategy keeps (the classic failure mode of
density-sensitive sampling).
"""

import time

import numpy as np

from randla.rng import Rng
from randla.sampling import (farthest_point_sample, inverse_density_sample,
                             pds_fit_radius, poisson_disk_sample, random_sample)

rng = Rng(42)

# dense blob + a sparse far-away cluster (2% of the points)
dense = rng.uniforms((19_600, 3))
sparse = rng.uniforms((400, 3)) * 3.0 + np.array([8.0, 8.0, 8.0])
coords = np.vstack([dense, sparse])
n = coords.shape[0]
m = n // 10
sparse_ids = set(range(19_600, n))

print(f"{n} points, sampling m={m} (10%)\n")
print(f"{'method':<18} {'seconds':>8}  {'kept':>6}  sparse-cluster share")

t0 = time.perf_counter()
idx = random_sample(n, m, rng)
dt = time.perf_counter() - t0
share = len(sparse_ids.intersection(idx.tolist())) / len(idx)
print(f"{'random':<18} {dt:8.4f}  {len(idx):6d}  {share:.3f} (matches the 2% prior)")

t0 = time.perf_counter()
idx = farthest_point_sample(coords, m, start_index=0)
dt = time.perf_counter() - t0
share = len(sparse_ids.intersection(idx.tolist())) / len(idx)
print(f"{'farthest-point':<18} {dt:8.4f}  {len(idx):6d}  {share:.3f} (covers space evenly)")

t0 = time.perf_counter()
idx = inverse_density_sample(coords, m, t=16)
dt = time.perf_counter() - t0
share = len(sparse_ids.intersection(idx.tolist())) / len(idx)
print(f"{'inverse-density':<18} {dt:8.4f}  {len(idx):6d}  {share:.3f} (low density ranks first)")

radius, idx = pds_fit_radius(coords, m, rng, tolerance=0.1)
t0 = time.perf_counter()
idx = poisson_disk_sample(coords, radius, rng)
dt = time.perf_counter() - t0
share = len(sparse_ids.intersection(idx.tolist())) / len(idx)
print(f"{'poisson-disk':<18} {dt:8.4f}  {len(idx):6d}  {share:.3f} (blue noise at r={radius:.3f})")

print("\nRandom sampling is orders of magnitude cheaper at scale; the network's")
print("job is to survive the features it throws away.")
