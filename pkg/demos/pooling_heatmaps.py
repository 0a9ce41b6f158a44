"""
What the pooling layers look at
===============================

Train briefly, then sum each convolution layer's activations over channels
and draw one n x n grid per layer next to the final tag confidence.
"""
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from relmetric import TrainConfig, train
from relmetric.cli import heatmaps
from relmetric.corpus import example_from_record
from relmetric.synthetic import synthetic_corpus

config = TrainConfig(channels=8, layers=4, context_dim=32, word_dim=32, char_features=16, epochs=10, seed=0)
model = train(config, synthetic_corpus(40, seed=2)).model

sentence = "Greta Novak , born in Porto , now lives in Graz ."
ex = example_from_record({"id": "look", "text": sentence})
grids = heatmaps(model, ex)

fig, axes = plt.subplots(1, len(grids), figsize=(3.2 * len(grids), 3.4))
for ax, (name, grid) in zip(axes, grids):
    ax.imshow(grid, cmap="viridis")
    ax.set_title(name)
    ax.set_xticks(range(len(ex))), ax.set_yticks(range(len(ex)))
    ax.set_xticklabels(ex.words, rotation=90, fontsize=6)
    ax.set_yticklabels(ex.words, fontsize=6)
fig.tight_layout()

out = sys.argv[1] if len(sys.argv) > 1 else "pooling_heatmaps.png"
fig.savefig(out, dpi=120)
print("wrote", out)
