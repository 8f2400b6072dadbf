"""Train a deep ensemble on oracle data and check it against held-out samples."""
import numpy as np

from fzmoo.ensemble import r_squared, train_ensemble, train_test_split
from fzmoo.neural import Architecture, TrainConfig, mse_loss
from fzmoo.oracle import generate_dataset
from fzmoo.param_space import fit_scaler

data = generate_dataset(None, 2500, seed=42).training_view()
tr, te = train_test_split(len(data), 0.1, seed=42)
scaler = fit_scaler(data.X[tr], data.Y[tr])

model = train_ensemble(Architecture((32, 32, 32)), scaler.transform_x(data.X[tr]), scaler.transform_y(data.Y[tr]),
                       M=10, base_seed=42, config=TrainConfig(seed=42), scaler=scaler)

pred, spread = model.predict(scaler.transform_x(data.X[te]))
target = scaler.transform_y(data.Y[te])
print("scaled test MSE per output:", np.array2string(mse_loss(pred, target).per_output, precision=6))
print("R^2 per output:            ", np.array2string(r_squared(pred, target), precision=4))
print("mean member spread:        ", np.array2string(spread.mean(axis=0), precision=4))

# physical units in, physical units out
print("\nfirst test point, predicted vs simulated:")
print(np.round(model(data.X[te][:1])[0], 4))
print(np.round(data.Y[te][0], 4))
