"""Peek at the attention scores inside the aggregation blocks.

At initialization the score maps are near-uniform over the K neighbors; after
a short training run the deeper layers commit to fewer neighbors, which shows
up as lower entropy.
"""

import numpy as np

from randla.network import NetworkConfig, attention_entropy, export_attention, init_params
from randla.rng import Rng
from randla.synth import generate_scene
from randla.train import TrainConfig, train_loop

master = Rng(51)
clouds = [generate_scene(4096, master.child(i)) for i in range(6)]
probe = clouds[-1]

untrained = init_params(NetworkConfig(n_class=3, d_in=6), Rng(0))
cfg = TrainConfig(seed=3, n_class=3, epochs=15, points_per_crop=1024, crops_per_epoch=8)
trained, _ = train_loop(clouds[:5], cfg)

print(f"{'layer':<6} {'untrained entropy':>18} {'trained entropy':>16}  (uniform = ln K)")
for layer in range(4):
    e_before = np.mean([attention_entropy(m) for m in
                        export_attention(probe, untrained, layer, rng=Rng(4)).values()])
    e_after = np.mean([attention_entropy(m) for m in
                       export_attention(probe, trained, layer, rng=Rng(4)).values()])
    print(f"{layer:<6} {e_before:>18.3f} {e_after:>16.3f}")

mats = export_attention(probe, trained, layer=0, point_ids=np.array([0]), rng=Rng(4))
print("\nscore matrix of point 0 at layer 0 (K x C), columns sum to 1:")
print(np.array2string(mats[0][:, :6], precision=3, suppress_small=True))
