# coding: utf-8

# # What happens as the cross section grows

# N times the MSE stays roughly level (it moves with the noise variance
# draw), while the gap between an LP extractor and its LS counterpart shrinks
# like 1/N. On a log-log plot the scaled gap has
# slope close to -1.

import numpy as np

from dfm_mse import Method, ScenarioConfig
from dfm_mse.montecarlo import GAP_PAIRS, loglog_slope, scaling_study

grid = [50, 100, 200, 400, 800]
recipe = ScenarioConfig(phi=0.0, hetero_mode="uniform", tau=0.5, sigma2_star=0.5,
                        n=50, t_len=100, replications=1, seed=0)
table = scaling_study(recipe, grid, ["GLS", "fLP"])
print("N * MSE for GLS:", np.round(table.scaled_mse[Method.GLS], 4))

for pair in GAP_PAIRS[:3]:
    print(pair[0].value, pair[1].value, "slope", round(table.gap_slopes[pair], 3))

# A single draw of loadings gives noisy slopes. Averaging the gap over a few
# loading draws first steadies them.

total = {pair: np.zeros(len(grid)) for pair in GAP_PAIRS[:3]}
for seed in range(10):
    t = scaling_study(recipe.with_(seed=seed), grid, ["GLS"])
    for pair in total:
        total[pair] += t.gaps[pair] / 10
for pair, gap in total.items():
    print(pair[0].value, pair[1].value, "averaged slope", round(loglog_slope(grid, gap), 3))
