"""Feed-forward classifier on the six normalized losses.

A small fully connected net (default 6:6:6:1, tanh hidden units, linear
output) regresses the integer class code; training minimizes the mean
squared error with a dense quasi-Newton (BFGS) optimizer and a
backtracking line search. The scalar output is cut into the three classes
by two thresholds optimized per momentum bin.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MissingSpeciesError,
    ParameterDomainError,
    SchemaMismatchError,
    TrainingDivergedError,
)

NET_FORMAT_VERSION = 1

CUT_GRID_LO = 0.5
CUT_GRID_HI = 3.5
CUT_GRID_STEP = 0.01
DEFAULT_CUTS = (1.5, 2.5)


@dataclass(frozen=True)
class NetTopology:
    layer_sizes: tuple = (6, 6, 6, 1)
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise ParameterDomainError(
                "topology must end in a single output unit"
            )
        if self.hidden_activation != "tanh" or self.output_activation != "linear":
            raise ParameterDomainError(
                "only tanh hidden units with a linear output are supported"
            )

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum(
            sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1)
        )


@dataclass
class CutSet:
    """Two thresholds splitting the scalar output into three classes."""

    t_low: float
    t_high: float
    objective: float = math.nan
    degenerate: bool = False

    def __post_init__(self):
        if not self.t_low < self.t_high:
            raise ParameterDomainError("cuts must satisfy t_low < t_high")


@dataclass
class TrainedNet:
    topology: NetTopology
    theta: np.ndarray  # flat parameter vector
    seed: int
    trace: list = field(default_factory=list)  # (iteration, training loss)
    best_val_loss: float = math.nan
    cuts: CutSet | None = None


def _unpack(theta: np.ndarray, topology: NetTopology):
    sizes = topology.layer_sizes
    weights, biases, pos = [], [], 0
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        weights.append(theta[pos : pos + n_in * n_out].reshape(n_in, n_out))
        pos += n_in * n_out
        biases.append(theta[pos : pos + n_out])
        pos += n_out
    return weights, biases


def init_theta(topology: NetTopology, rng) -> np.ndarray:
    """Uniform in +-1/sqrt(fan_in) per layer."""
    parts = []
    sizes = topology.layer_sizes
    for i in range(len(sizes) - 1):
        bound = 1.0 / math.sqrt(sizes[i])
        parts.append(rng.uniform(-bound, bound, size=sizes[i] * sizes[i + 1]))
        parts.append(rng.uniform(-bound, bound, size=sizes[i + 1]))
    return np.concatenate(parts)


def forward(net_or_theta, x, topology: NetTopology | None = None) -> np.ndarray:
    """Scalar output for one input vector or an (n, p) batch."""
    if isinstance(net_or_theta, TrainedNet):
        theta, topology = net_or_theta.theta, net_or_theta.topology
    else:
        theta = net_or_theta
        if topology is None:
            raise SchemaMismatchError("topology required with a raw theta")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != topology.layer_sizes[0]:
        raise SchemaMismatchError(
            f"input width {x.shape[1]} != {topology.layer_sizes[0]}"
        )
    weights, biases = _unpack(np.asarray(theta, dtype=float), topology)
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ w + b)
    out = (a @ weights[-1] + biases[-1])[:, 0]
    return out if out.size > 1 else float(out[0])


def mse_loss_and_grad(theta, topology: NetTopology, x, y):
    """Mean squared error against the class codes, with its gradient."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    weights, biases = _unpack(theta, topology)
    acts = [x]
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ w + b)
        acts.append(a)
    out = (a @ weights[-1] + biases[-1])[:, 0]
    resid = out - y
    loss = float(resid @ resid) / y.size

    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    delta = (2.0 / y.size) * resid[:, None]
    grad_w[-1] = acts[-1].T @ delta
    grad_b[-1] = delta.sum(axis=0)
    back = delta @ weights[-1].T
    for layer in range(len(weights) - 2, -1, -1):
        back = back * (1.0 - acts[layer + 1] ** 2)
        grad_w[layer] = acts[layer].T @ back
        grad_b[layer] = back.sum(axis=0)
        if layer:
            back = back @ weights[layer].T
    grad = np.concatenate(
        [g for pair in zip(grad_w, grad_b) for g in (pair[0].ravel(), pair[1])]
    )
    return loss, grad


def _bfgs(fun_grad, x0, max_iter, gtol=1e-10, callback=None):
    """Dense BFGS with a backtracking (sufficient-decrease) line search.

    Returns the last iterate; raises TrainingDivergedError on a
    non-finite objective. The callback sees (iteration, x, f) after every
    accepted step.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise TrainingDivergedError("non-finite loss at initialization", iteration=0)
    n = x.size
    h = np.eye(n)
    identity = np.eye(n)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) <= gtol:
            break
        direction = -h @ g
        slope = float(g @ direction)
        if slope >= 0.0:  # H lost positive definiteness; reset
            h = np.eye(n)
            direction = -g
            slope = float(g @ direction)
        alpha = 1.0
        accepted = False
        for _ in range(40):
            x_new = x + alpha * direction
            f_new, g_new = fun_grad(x_new)
            if not np.isfinite(f_new):
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {it}", iteration=it
                )
            if f_new <= f + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        s = x_new - x
        y_vec = g_new - g
        x, f, g = x_new, f_new, g_new
        sy = float(s @ y_vec)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y_vec):
            rho = 1.0 / sy
            left = identity - rho * np.outer(s, y_vec)
            h = left @ h @ left.T + rho * np.outer(s, s)
        if callback is not None:
            callback(it, x, f)
    return x, f


def train(
    x,
    y,
    topology: NetTopology = NetTopology(),
    seed: int = 0,
    max_iter: int = 1000,
    val_fraction: float = 0.2,
    validation: tuple | None = None,
) -> TrainedNet:
    """Quasi-Newton training on complete data against the class codes.

    A seeded split holds out ``val_fraction`` of the rows (or use an
    explicit ``validation=(x_val, y_val)`` and train on all given rows);
    the returned parameters are the iterate with the best validation loss.
    The trace records (iteration, training loss) for every accepted step.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise SchemaMismatchError("x must be (n, p) with one target per row")
    if np.isnan(x).any():
        raise SchemaMismatchError("training data must be complete (no NaN)")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7E417)))
    if validation is not None:
        x_tr, y_tr = x, y
        x_val = np.asarray(validation[0], dtype=float)
        y_val = np.asarray(validation[1], dtype=float)
        rng.permutation(y.size)  # keep the init stream independent of the split mode
    else:
        order = rng.permutation(y.size)
        n_val = int(round(val_fraction * y.size))
        val_idx, train_idx = order[:n_val], order[n_val:]
        x_tr, y_tr = x[train_idx], y[train_idx]
        x_val, y_val = x[val_idx], y[val_idx]

    theta0 = init_theta(topology, rng)
    trace = []
    best = {"theta": theta0.copy(), "val": math.inf}

    def objective(theta):
        return mse_loss_and_grad(theta, topology, x_tr, y_tr)

    def on_step(it, theta, f):
        trace.append((it, f))
        if x_val.shape[0]:
            out = forward(theta, x_val, topology)
            val = float(np.mean((np.atleast_1d(out) - y_val) ** 2))
        else:
            val = f
        if val < best["val"]:
            best["val"] = val
            best["theta"] = theta.copy()

    loss0, _ = objective(theta0)
    on_step(0, theta0, loss0)
    _bfgs(objective, theta0, max_iter=max_iter, callback=on_step)
    return TrainedNet(
        topology=topology,
        theta=best["theta"],
        seed=seed,
        trace=trace,
        best_val_loss=best["val"],
    )


def _counts_below(outputs, labels, grid):
    by_species = {}
    for code in (1, 2, 3):
        z = np.sort(outputs[labels == code])
        by_species[code] = (np.searchsorted(z, grid, side="left"), z.size)
    return by_species


def optimize_cuts(outputs, labels, default=DEFAULT_CUTS) -> CutSet:
    """Grid search for the two thresholds on a 0.01-spaced grid in
    [0.5, 3.5], maximizing the mean over species of efficiency x purity.

    Ties break toward the default midpoint pair, then lexicographically.
    A flat output distribution short-circuits to the default pair with
    the ``degenerate`` flag set.
    """
    outputs = np.asarray(outputs, dtype=float)
    labels = np.asarray(labels)
    for code in (1, 2, 3):
        if not np.any(labels == code):
            raise MissingSpeciesError(
                f"species {code} absent from the validation set", species=code
            )
    if np.ptp(outputs) < 1e-12:
        cuts = CutSet(*default, degenerate=True)
        cuts.objective = _cut_objective(outputs, labels, *default)
        return cuts

    n_grid = int(round((CUT_GRID_HI - CUT_GRID_LO) / CUT_GRID_STEP)) + 1
    grid = CUT_GRID_LO + CUT_GRID_STEP * np.arange(n_grid)
    below = _counts_below(outputs, labels, grid)

    # counts[c][s]: rows of true species s assigned class c, as (i, j) grids
    n1 = {s: below[s][0][:, None] for s in (1, 2, 3)}
    n3 = {s: below[s][1] - below[s][0][None, :] for s in (1, 2, 3)}
    n2 = {s: below[s][0][None, :] - below[s][0][:, None] for s in (1, 2, 3)}
    totals = {s: below[s][1] for s in (1, 2, 3)}

    objective = np.zeros((n_grid, n_grid))
    for c, counts in ((1, n1), (2, n2), (3, n3)):
        assigned = sum(counts[s] for s in (1, 2, 3))
        with np.errstate(divide="ignore", invalid="ignore"):
            eff = counts[c] / totals[c]
            pur = np.where(assigned > 0, counts[c] / np.maximum(assigned, 1), 0.0)
        objective += eff * pur
    objective /= 3.0
    invalid = np.triu(np.ones((n_grid, n_grid), dtype=bool)).T  # i >= j
    objective[invalid] = -np.inf

    best = objective.max()
    ties = np.argwhere(objective >= best - 1e-15)
    t_i = grid[ties[:, 0]]
    t_j = grid[ties[:, 1]]
    dist = (t_i - default[0]) ** 2 + (t_j - default[1]) ** 2
    pick = np.lexsort((ties[:, 1], ties[:, 0], dist))[0]
    return CutSet(
        float(t_i[pick]), float(t_j[pick]), objective=float(best), degenerate=False
    )


def _cut_objective(outputs, labels, t_low, t_high) -> float:
    assigned = classify_outputs(outputs, CutSet(t_low, t_high))
    total = 0.0
    for c in (1, 2, 3):
        n_true = np.sum(labels == c)
        n_assigned = np.sum(assigned == c)
        n_correct = np.sum((labels == c) & (assigned == c))
        eff = n_correct / n_true if n_true else 0.0
        pur = n_correct / n_assigned if n_assigned else 0.0
        total += eff * pur
    return total / 3.0


def classify_outputs(outputs, cuts: CutSet) -> np.ndarray:
    """Cut the scalar outputs: (-inf, t_low) -> 1, [t_low, t_high) -> 2,
    [t_high, inf) -> 3."""
    outputs = np.atleast_1d(np.asarray(outputs, dtype=float))
    return np.where(
        outputs < cuts.t_low, 1, np.where(outputs < cuts.t_high, 2, 3)
    ).astype(int)


def classify(net: TrainedNet, cuts: CutSet, x) -> np.ndarray:
    """Forward pass plus threshold cuts; returns species codes."""
    out = np.atleast_1d(forward(net, x))
    return classify_outputs(out, cuts)


def net_to_dict(net: TrainedNet) -> dict:
    return {
        "format_version": NET_FORMAT_VERSION,
        "topology": list(net.topology.layer_sizes),
        "hidden_activation": net.topology.hidden_activation,
        "output_activation": net.topology.output_activation,
        "theta": net.theta.tolist(),
        "seed": net.seed,
        "trace_summary": {
            "n_steps": len(net.trace),
            "final_train_loss": net.trace[-1][1] if net.trace else None,
            "best_val_loss": None
            if math.isnan(net.best_val_loss)
            else net.best_val_loss,
        },
        "cuts": None
        if net.cuts is None
        else {
            "t_low": net.cuts.t_low,
            "t_high": net.cuts.t_high,
            "objective": net.cuts.objective,
            "degenerate": net.cuts.degenerate,
        },
    }


def net_from_dict(doc: dict) -> TrainedNet:
    if doc.get("format_version") != NET_FORMAT_VERSION:
        raise SchemaMismatchError(
            f"unsupported net format version {doc.get('format_version')!r}"
        )
    topology = NetTopology(
        layer_sizes=tuple(doc["topology"]),
        hidden_activation=doc["hidden_activation"],
        output_activation=doc["output_activation"],
    )
    cuts = None
    if doc.get("cuts"):
        c = doc["cuts"]
        cuts = CutSet(
            c["t_low"],
            c["t_high"],
            objective=c.get("objective", math.nan),
            degenerate=c.get("degenerate", False),
        )
    net = TrainedNet(
        topology=topology,
        theta=np.asarray(doc["theta"], dtype=float),
        seed=doc.get("seed", 0),
        best_val_loss=doc["trace_summary"].get("best_val_loss") or math.nan,
        cuts=cuts,
    )
    return net


def save_net_json(path, net: TrainedNet, extra: dict | None = None):
    doc = net_to_dict(net)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_net_json(path) -> TrainedNet:
    with open(path) as fh:
        return net_from_dict(json.load(fh))
