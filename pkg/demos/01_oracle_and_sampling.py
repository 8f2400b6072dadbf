"""Sample the design space and look at what the stand-in simulator returns.

Run with ``python3 demos/01_oracle_and_sampling.py``.
"""
import numpy as np

from fzmoo.oracle import evaluate, generate_dataset
from fzmoo.param_space import default_space

space = default_space()
for p in space.params:
    print(f"{p.name:>4}  [{p.low:g}, {p.high:g}] {p.unit:<8} {p.description}")

# %% A Latin hypercube of 2500 points, run through the oracle
data = generate_dataset(space, 2500, seed=42)
print(f"\n{len(data)} samples, {int((~data.feasible).sum())} flagged non-physical "
      f"({100 * (~data.feasible).mean():.2f}%, expected 4.35%)")

# %% Output ranges over the feasible rows
tv = data.training_view()
for j, name in enumerate(["y1 max deflection", "y2 melt height", "y3 exceed stress", "y4 inductor voltage",
                          "y5 EM homogeneity", "y6 Voronkov ratio"]):
    col = tv.Y[:, j]
    print(f"{name:<22} {col.min():10.4g} .. {col.max():10.4g}")

# %% A single point
x = (space.low + space.high) / 2
x[2] = 3
out = evaluate(x, space)
print("\ncentre point:", np.round(out.y, 5), "feasible" if out.feasible else "infeasible")
