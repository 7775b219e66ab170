"""Exact KD-tree queries: k-nearest, 1-nearest, and fixed-radius with pad or
downsample to a constant K.

Everything is exact and deterministically tie-broken (ascending distance,
then ascending source index), which the demo shows on a degenerate lattice.
"""

import numpy as np

from randla.rng import Rng
from randla.spatial import build_index, knn, nearest, radius_neighbors

rng = Rng(7)
coords = rng.uniforms((5000, 3)) * 10.0
index = build_index(coords)

neigh = knn(index, coords[:3], 5)
print("5 nearest neighbors of the first three points (self included):")
for row, (ids, dists) in enumerate(zip(neigh.indices, neigh.distances)):
    pretty = ", ".join(f"{i}@{d:.3f}" for i, d in zip(ids, dists))
    print(f"  point {row}: {pretty}")

# a lattice makes distance ties everywhere; order stays deterministic
grid = np.array([[x, y, 0.0] for x in range(3) for y in range(3)], dtype=float)
gi = build_index(grid)
print("\ncenter of a 3x3 lattice, k=5 (ties resolve to smaller indices):",
      knn(gi, grid[4:5], 5).indices[0].tolist())
print("midpoint between lattice points 0 and 1 ->", nearest(gi, np.array([[0.0, 0.5, 0.0]]))[0])

ball = radius_neighbors(index, coords[:2], radius=0.6, k=16, rng=rng)
d = np.linalg.norm(coords[:2][:, None] - coords[ball.indices], axis=2)
print(f"\nradius query (r=0.6, K=16): max kept distance {d.max():.3f},"
      f" rows sorted: {bool((np.diff(ball.distances, axis=1) >= 0).all())}")

lonely = np.array([[50.0, 50.0, 50.0]])
index2 = build_index(np.vstack([coords, lonely]))
padded = radius_neighbors(index2, lonely, radius=0.1, k=4, rng=rng)
print("isolated point pads its row by repeating itself:", padded.indices[0].tolist())
