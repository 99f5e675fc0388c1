"""Parametric surrogate for a multilayer silicon telescope.

Generates per-layer energy losses for pions, kaons and protons from a
Bethe-Bloch mean with Moyal straggling, applies the kaon-referenced log
normalization, and injects missing cells by MCAR / MAR / MNAR mechanisms.
This is a sampling surrogate, not a transport simulation: layers are
conditionally i.i.d. given (species, momentum), and no fidelity beyond
band ordering and separation trends is claimed.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from scipy.stats import moyal

from .data import IncompleteDataset
from .errors import ConfigError, ParameterDomainError

PION, KAON, PROTON = 1, 2, 3
SPECIES_CODES = (PION, KAON, PROTON)
SPECIES_NAMES = {PION: "pion", KAON: "kaon", PROTON: "proton"}
MASS_GEV = {PION: 0.13957, KAON: 0.49368, PROTON: 0.93827}

# Bethe-Bloch constants for silicon; no density-effect correction.
K_BETHE = 0.307075  # MeV mol^-1 cm^2
Z_OVER_A = 14.0 / 28.0855
RHO_SI = 2.329  # g/cm^3
I_SI = 173e-6  # MeV
M_E = 0.51099895  # MeV

# Below this momentum particles range out in the telescope; rejected.
MIN_MOMENTUM = 0.05  # GeV/c

# Moyal(0,1): mean offset gamma_E + ln 2, and FWHM in scale units
# (roots of z + e^-z = 1 + 2 ln 2).
_MOYAL_MEAN = float(np.euler_gamma + math.log(2.0))
_MOYAL_FWHM = 3.5908
# Landau FWHM is about 4.018 straggling-parameter units for thin absorbers.
_LANDAU_FWHM = 4.018

_GENERATION_CHUNK = 16384


@dataclass(frozen=True)
class SimConfig:
    """Telescope geometry, particle mix and generation settings."""

    n_layers: int = 6
    layer_thickness_um: float = 500.0
    abundances: tuple = (0.80, 0.15, 0.05)
    momentum_min: float = 0.0
    momentum_max: float = 1.0
    bin_width: float = 0.05
    n_events: int = 1_000_000  # desk-scale runs configure 1e5
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1", path="sim.n_layers")
        if self.layer_thickness_um <= 0:
            raise ConfigError(
                "layer thickness must be positive", path="sim.layer_thickness_um"
            )
        if len(self.abundances) != 3 or abs(sum(self.abundances) - 1.0) > 1e-9:
            raise ConfigError(
                "abundances must be a 3-simplex over pion/kaon/proton",
                path="sim.abundances",
            )
        if not self.momentum_max > max(self.momentum_min, MIN_MOMENTUM):
            raise ConfigError(
                f"momentum_max must exceed {MIN_MOMENTUM} GeV/c",
                path="sim.momentum_max",
            )
        if self.bin_width <= 0:
            raise ConfigError("bin_width must be positive", path="sim.bin_width")
        span = self.momentum_max - self.momentum_min
        ratio = span / self.bin_width
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                "bin_width must divide the momentum range", path="sim.bin_width"
            )
        if self.n_events < 1:
            raise ConfigError("n_events must be >= 1", path="sim.n_events")

    @property
    def thickness_cm(self) -> float:
        return self.layer_thickness_um * 1e-4

    def bin_edges(self) -> np.ndarray:
        n_bins = round((self.momentum_max - self.momentum_min) / self.bin_width)
        return self.momentum_min + self.bin_width * np.arange(n_bins + 1)


@dataclass(frozen=True)
class MissingnessSpec:
    """Cell-dropping mechanism and its parameters.

    mcar: each cell independently missing with probability ``eta``.
    mnar: cell j missing with probability sigmoid((threshold - E_j)/width)
    on the raw per-layer loss, so small deposits below a detector
    threshold go missing.
    mar: cell j missing with probability sigmoid(slope * mean of the other
    layers' normalized values + intercept); never reads cell j itself.
    """

    mechanism: str = "mcar"
    eta: float = 0.1
    threshold_mev: float = 0.15
    width_mev: float = 0.02
    mar_slope: float = 1.0
    mar_intercept: float = -2.0
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in ("mcar", "mar", "mnar"):
            raise ConfigError(
                f"unknown missingness mechanism {self.mechanism!r}",
                path="missingness.mechanism",
            )
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must be in [0, 1]", path="missingness.eta")
        if self.width_mev <= 0:
            raise ConfigError(
                "sigmoid width must be positive", path="missingness.width_mev"
            )


@dataclass
class Event:
    """One generated particle crossing."""

    species: int
    momentum: float
    raw_losses: np.ndarray  # MeV per layer
    normalized: np.ndarray  # ln(dE/dX) - ln(dE/dX_kaon(p)) per layer


@dataclass
class EventSample:
    """Column-oriented batch of events."""

    species: np.ndarray
    momentum: np.ndarray
    raw_losses: np.ndarray
    normalized: np.ndarray

    @property
    def n_events(self) -> int:
        return self.species.size

    def subset(self, rows) -> "EventSample":
        rows = np.asarray(rows)
        return EventSample(
            self.species[rows].copy(),
            self.momentum[rows].copy(),
            self.raw_losses[rows].copy(),
            self.normalized[rows].copy(),
        )

    def to_dataset(self) -> IncompleteDataset:
        return IncompleteDataset.complete(
            self.normalized.copy(), self.species.copy(), self.momentum.copy()
        )


@dataclass
class MaskedSample:
    """A masked test sample paired with its pre-mask truth."""

    data: IncompleteDataset
    truth: np.ndarray


def overall_missing_fraction(eta: float, d: int) -> float:
    """Probability that at least one of d cells is missing: 1 - (1-eta)^d."""
    if not 0.0 <= eta <= 1.0 or d < 1:
        raise ParameterDomainError("need 0 <= eta <= 1 and d >= 1")
    return 1.0 - (1.0 - eta) ** d


def eta_for_overall_fraction(f: float, d: int) -> float:
    """Per-cell rate giving overall fraction f over d cells (contour inverse)."""
    if not 0.0 <= f < 1.0 or d < 1:
        raise ParameterDomainError("need 0 <= f < 1 and d >= 1")
    return 1.0 - (1.0 - f) ** (1.0 / d)


def _bethe_bloch(betagamma, mass_gev):
    bg2 = np.asarray(betagamma, dtype=float) ** 2
    gamma = np.sqrt(1.0 + bg2)
    beta2 = bg2 / (1.0 + bg2)
    ratio = M_E / (mass_gev * 1e3)
    tmax = 2.0 * M_E * bg2 / (1.0 + 2.0 * gamma * ratio + ratio**2)
    arg = 2.0 * M_E * bg2 * tmax / I_SI**2
    return RHO_SI * K_BETHE * Z_OVER_A / beta2 * (0.5 * np.log(arg) - beta2)


_PLATEAU_BG = {}


def _plateau_betagamma(mass_gev) -> float:
    """betagamma at the stopping-power minimum (cached per mass)."""
    key = round(mass_gev, 9)
    if key not in _PLATEAU_BG:
        grid = np.geomspace(0.2, 50.0, 4001)
        _PLATEAU_BG[key] = float(grid[np.argmin(_bethe_bloch(grid, mass_gev))])
    return _PLATEAU_BG[key]


def mean_dedx(species, p):
    """Mean stopping power in silicon, MeV/cm, for momentum p in GeV/c.

    Bethe-Bloch with the relativistic rise clamped at the curve minimum,
    which keeps the surrogate non-increasing in betagamma over the
    simulated range (there is no density-effect correction to flatten the
    rise). Momenta at or below ``MIN_MOMENTUM`` are out of range.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= MIN_MOMENTUM):
        raise ParameterDomainError(
            f"momentum must exceed {MIN_MOMENTUM} GeV/c (particles range out)"
        )
    mass = MASS_GEV[int(species)]
    bg = np.minimum(p / mass, _plateau_betagamma(mass))
    out = _bethe_bloch(bg, mass)
    return out if out.ndim else float(out)


def _straggling_xi(beta2, thickness_cm) -> np.ndarray:
    """Thin-absorber straggling parameter, MeV."""
    x_gcm2 = thickness_cm * RHO_SI
    return 0.5 * K_BETHE * Z_OVER_A * x_gcm2 / beta2


def _loss_params(species_arr, p_arr, cfg: SimConfig):
    """Moyal (loc, scale) per event, matching the Bethe-Bloch mean and the
    Landau-FWHM straggling heuristic."""
    mean_loss = np.empty_like(p_arr)
    beta2 = np.empty_like(p_arr)
    for code, mass in MASS_GEV.items():
        sel = species_arr == code
        if sel.any():
            mean_loss[sel] = mean_dedx(code, p_arr[sel]) * cfg.thickness_cm
            bg2 = (p_arr[sel] / mass) ** 2
            beta2[sel] = bg2 / (1.0 + bg2)
    scale = _straggling_xi(beta2, cfg.thickness_cm) * (_LANDAU_FWHM / _MOYAL_FWHM)
    loc = mean_loss - _MOYAL_MEAN * scale
    return loc, scale


def _sample_batch(cfg: SimConfig, rng, n: int) -> EventSample:
    species = rng.choice(
        np.array(SPECIES_CODES), size=n, p=np.asarray(cfg.abundances)
    )
    lo = cfg.momentum_min
    momentum = rng.uniform(lo, cfg.momentum_max, size=n)
    bad = momentum <= MIN_MOMENTUM
    while bad.any():
        momentum[bad] = rng.uniform(lo, cfg.momentum_max, size=int(bad.sum()))
        bad = momentum <= MIN_MOMENTUM
    loc, scale = _loss_params(species, momentum, cfg)
    raw = moyal.rvs(
        loc=loc[:, None],
        scale=scale[:, None],
        size=(n, cfg.n_layers),
        random_state=rng,
    )
    kaon_ref = np.log(mean_dedx(KAON, momentum))
    normalized = np.log(raw / cfg.thickness_cm) - kaon_ref[:, None]
    return EventSample(species, momentum, raw, normalized)


def sample_event(cfg: SimConfig, rng) -> Event:
    """Draw one event (species ~ abundances, p ~ uniform above cutoff)."""
    batch = _sample_batch(cfg, rng, 1)
    return Event(
        species=int(batch.species[0]),
        momentum=float(batch.momentum[0]),
        raw_losses=batch.raw_losses[0],
        normalized=batch.normalized[0],
    )


def generate_events(cfg: SimConfig) -> EventSample:
    """Generate ``cfg.n_events`` events, deterministically given the seed.

    Events are produced in fixed-size chunks with per-chunk derived seeds,
    so generation can shard across workers without changing the output.
    """
    chunks = []
    produced = 0
    chunk_index = 0
    while produced < cfg.n_events:
        n = min(_GENERATION_CHUNK, cfg.n_events - produced)
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, chunk_index)))
        chunks.append(_sample_batch(cfg, rng, n))
        produced += n
        chunk_index += 1
    return EventSample(
        np.concatenate([c.species for c in chunks]),
        np.concatenate([c.momentum for c in chunks]),
        np.vstack([c.raw_losses for c in chunks]),
        np.vstack([c.normalized for c in chunks]),
    )


def missingness_probabilities(events: EventSample, spec: MissingnessSpec):
    """Per-cell dropout probabilities for the configured mechanism."""
    n, d = events.raw_losses.shape
    if spec.mechanism == "mcar":
        return np.full((n, d), float(spec.eta))
    if spec.mechanism == "mnar":
        return expit((spec.threshold_mev - events.raw_losses) / spec.width_mev)
    total = events.normalized.sum(axis=1, keepdims=True)
    mean_others = (total - events.normalized) / (d - 1)
    return expit(spec.mar_slope * mean_others + spec.mar_intercept)


def apply_missingness(events: EventSample, spec: MissingnessSpec) -> IncompleteDataset:
    """Drop cells per the mechanism; returns the masked normalized dataset."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0x15A)))
    prob = missingness_probabilities(events, spec)
    mask = rng.random(prob.shape) >= prob
    values = np.where(mask, events.normalized, np.nan)
    return IncompleteDataset(values, mask, events.species.copy(), events.momentum.copy())


def momentum_bin_index(p, bin_width: float):
    """Half-open bin index floor(p / w) with a boundary-safe epsilon."""
    return np.floor(np.asarray(p, dtype=float) / bin_width + 1e-9).astype(int)


def bin_by_momentum(events: EventSample, bin_width: float):
    """Split events into half-open momentum bins [k w, (k+1) w).

    Returns a list of ((lo, hi), EventSample) in ascending momentum order;
    only non-empty bins are included.
    """
    if bin_width <= 0:
        raise ParameterDomainError("bin_width must be positive")
    idx = momentum_bin_index(events.momentum, bin_width)
    out = []
    for k in np.unique(idx):
        rows = np.flatnonzero(idx == k)
        interval = (k * bin_width, (k + 1) * bin_width)
        out.append((interval, events.subset(rows)))
    return out


def split_train_pool(events: EventSample, seed: int):
    """Seeded half/half split into (training half, test pool)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5B117)))
    order = rng.permutation(events.n_events)
    half = events.n_events // 2
    return events.subset(order[:half]), events.subset(order[half:])


def make_test_samples(
    pool: EventSample,
    n_samples: int,
    sample_size: int,
    spec: MissingnessSpec,
    seed: int,
) -> list:
    """Draw masked test samples from a bin's pool.

    Each sample picks ``sample_size`` distinct rows (without replacement
    within the sample) and masks them independently with a derived seed.
    """
    if pool.n_events < sample_size:
        raise ParameterDomainError(
            f"bin too small: pool has {pool.n_events} events, "
            f"sample_size is {sample_size}"
        )
    samples = []
    for s in range(n_samples):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7E57, s)))
        rows = rng.choice(pool.n_events, size=sample_size, replace=False)
        sub = pool.subset(rows)
        derived = int(np.random.SeedSequence((spec.seed, seed, s)).generate_state(1)[0])
        masked = apply_missingness(sub, replace(spec, seed=derived))
        samples.append(MaskedSample(data=masked, truth=sub.normalized.copy()))
    return samples
