"""Average causal effect (ACE) of latent features on class logits.

For a head g, latent coordinate j and value alpha, the interventional
expectation is E[y | do(z^j = alpha)] with every other coordinate drawn
independently from Uniform(low^k, high^k); y is the logit of the target
class. The baseline averages that expectation over alpha ~ Uniform(low^j,
high^j), and the ACE is the difference of the two.

Three estimators are available (see ``EstimatorMode``):

- analytic-affine: exact closed form, affine heads only
- monte-carlo: K uniform draws fixed by the config seed and shared between
  the interventional and baseline terms, differentiable w.r.t. alpha,
  latent inputs and head parameters
- quadrature: midpoint rule on a product grid, n <= 4, values only
"""

import logging
from dataclasses import dataclass

import numpy as np

from acedg.models.network import ClassifierHead
from acedg.schemas.attribution import AceEstimatorConfig, EstimatorMode, InterventionSpec
from acedg.utils.tensor import (
    DimensionError,
    Tensor,
    add,
    concat,
    matmul,
    mul,
    no_tape,
    ones,
    pick,
    reshape,
    scale,
    sub,
    sum_axis,
    take_rows,
    tensor,
    total,
)

logger = logging.getLogger(__name__)

MAX_QUADRATURE_DIM = 4
# Upper bound on head evaluations per vectorized chunk
ROWS_PER_CHUNK = 65536


class EstimatorError(ValueError):
    """Raised when an estimator is used outside its domain."""
    pass


class EmptyBatchError(ValueError):
    """Raised when an operation needs at least one sample."""
    pass


@dataclass(frozen=True)
class FeatureBounds:
    """Per-coordinate intervention interval [low^j, high^j]."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        low = np.asarray(self.low, dtype=np.float64)
        high = np.asarray(self.high, dtype=np.float64)
        if low.ndim != 1 or low.shape != high.shape:
            raise DimensionError(f"bounds must be matching 1-D arrays, got {low.shape} and {high.shape}")
        if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
            raise ValueError("bounds must be finite")
        if np.any(low > high):
            raise ValueError("bounds require low <= high for every coordinate")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def latent_dim(self) -> int:
        return int(self.low.shape[0])

    @property
    def midpoint(self) -> np.ndarray:
        return (self.low + self.high) / 2.0

    @property
    def width(self) -> np.ndarray:
        return self.high - self.low


@dataclass(frozen=True)
class AceVector:
    """ACE of every latent coordinate for one sample, targeting one class."""

    values: Tensor
    target_class: int
    sample_id: int = 0

    def __post_init__(self) -> None:
        if self.values.ndim != 1:
            raise DimensionError(f"ACE vector must be 1-D, got shape {self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class AceDiagnostics:
    """Counters accumulated across ACE evaluations."""

    out_of_bounds: int = 0


def compute_bounds(features: Tensor | np.ndarray, epsilon: float) -> FeatureBounds:
    """
    Per-coordinate batch min/max, widened by epsilon * (range + 1) on each side.

    Bounds are constants: no gradient flows into them.

    Args:
        features: Latent features (b x n)
        epsilon: Relative widening, >= 0

    Returns:
        FeatureBounds for the batch

    Raises:
        EmptyBatchError: If the batch has no rows
    """
    values = features.values if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"compute_bounds expects b x n features, got {values.shape}")
    if values.shape[0] == 0:
        raise EmptyBatchError("compute_bounds needs at least one sample")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    low = values.min(axis=0)
    high = values.max(axis=0)
    pad = epsilon * ((high - low) + 1.0)
    return FeatureBounds(low=low - pad, high=high + pad)


def _validate(head: ClassifierHead, bounds: FeatureBounds, cfg: AceEstimatorConfig, target_class: int) -> None:
    if bounds.latent_dim != head.latent_dim:
        raise DimensionError(f"bounds cover {bounds.latent_dim} coordinates, head expects {head.latent_dim}")
    if not 0 <= target_class < head.num_outputs:
        raise EstimatorError(f"target class {target_class} outside [0, {head.num_outputs})")
    if cfg.mode == EstimatorMode.ANALYTIC_AFFINE and not head.is_affine:
        raise EstimatorError("analytic-affine estimator requested for a head with hidden layers")
    if cfg.mode == EstimatorMode.QUADRATURE and head.latent_dim > MAX_QUADRATURE_DIM:
        raise EstimatorError(
            f"quadrature estimator supports n <= {MAX_QUADRATURE_DIM}, head has n = {head.latent_dim}"
        )


def _intervention(j: int, alpha: "float | Tensor", n: int) -> Tensor:
    if j >= n:
        raise EstimatorError(f"coordinate {j} outside [0, {n})")
    if isinstance(alpha, Tensor):
        if alpha.size != 1:
            raise DimensionError("intervened value must be a scalar")
        InterventionSpec(coordinate=j, value=alpha.item())
        return reshape(alpha, ())
    spec = InterventionSpec(coordinate=j, value=alpha)
    return tensor(spec.value)


def _mc_draws(bounds: FeatureBounds, cfg: AceEstimatorConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    u = rng.random((cfg.mc_samples, bounds.latent_dim))
    return bounds.low + u * bounds.width


def _midpoints(low: float, high: float, points: int) -> np.ndarray:
    return low + (np.arange(points, dtype=np.float64) + 0.5) / points * (high - low)


def _inner_grid(bounds: FeatureBounds, j: int, points: int) -> np.ndarray:
    """Product grid over all coordinates except j (column j left at 0)."""
    axes = [
        np.zeros(1) if k == j else _midpoints(bounds.low[k], bounds.high[k], points)
        for k in range(bounds.latent_dim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _intervened_rows(draws: np.ndarray, j: int, alpha: Tensor) -> Tensor:
    mask = np.zeros_like(draws)
    mask[:, j] = 1.0
    return add(tensor(draws * (1.0 - mask)), mul(alpha, tensor(mask)))


def _target_mean(head: ClassifierHead, rows: Tensor, target_class: int) -> Tensor:
    logits = head(rows)
    picked = pick(logits, np.full(rows.shape[0], target_class))
    return scale(total(picked), 1.0 / rows.shape[0])


def _expectation_values(
    head: ClassifierHead,
    base_rows: np.ndarray,
    j: int,
    alphas: np.ndarray,
    target_class: int,
) -> np.ndarray:
    """Mean target logit over ``base_rows`` with column j set to each alpha."""
    per_chunk = max(1, ROWS_PER_CHUNK // base_rows.shape[0])
    out = np.empty(alphas.shape[0], dtype=np.float64)
    with no_tape():
        for start in range(0, alphas.shape[0], per_chunk):
            chunk = alphas[start:start + per_chunk]
            rows = np.tile(base_rows, (chunk.shape[0], 1))
            rows[:, j] = np.repeat(chunk, base_rows.shape[0])
            logits = head(tensor(rows)).values[:, target_class]
            out[start:start + chunk.shape[0]] = logits.reshape(chunk.shape[0], -1).mean(axis=1)
    return out


def _quadrature_baseline(
    head: ClassifierHead, j: int, bounds: FeatureBounds, cfg: AceEstimatorConfig, target_class: int
) -> float:
    grid = _inner_grid(bounds, j, cfg.inner_points)
    outer = _midpoints(bounds.low[j], bounds.high[j], cfg.grid_points)
    return float(_expectation_values(head, grid, j, outer, target_class).mean())


def interventional_expectation(
    head: ClassifierHead,
    j: int,
    alpha: "float | Tensor",
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
    target_class: int,
) -> Tensor:
    """
    Estimate E[y | do(z^j = alpha)] for the target-class logit y.

    Args:
        head: Classifier head g_phi
        j: Intervened latent coordinate
        alpha: Intervened value (float, or scalar Tensor to differentiate through)
        bounds: Uniform prior support of the latent coordinates
        cfg: Estimator configuration
        target_class: Output neuron

    Returns:
        Scalar tensor

    Raises:
        EstimatorError: If the estimator does not apply to this head or query
    """
    _validate(head, bounds, cfg, target_class)
    a = _intervention(j, alpha, bounds.latent_dim)

    if cfg.mode == EstimatorMode.ANALYTIC_AFFINE:
        weight, bias = head.affine_parameters()
        w = reshape(take_rows(weight, [target_class]), (bounds.latent_dim,))
        others = bounds.midpoint.copy()
        others[j] = 0.0
        w_j = reshape(take_rows(w, [j]), ())
        b_y = reshape(take_rows(bias, [target_class]), ())
        return add(add(mul(w_j, a), total(mul(w, tensor(others)))), b_y)

    if cfg.mode == EstimatorMode.MONTE_CARLO:
        rows = _intervened_rows(_mc_draws(bounds, cfg), j, a)
        return _target_mean(head, rows, target_class)

    grid = _inner_grid(bounds, j, cfg.inner_points)
    return tensor(_expectation_values(head, grid, j, np.array([a.item()]), target_class)[0])


def baseline_expectation(
    head: ClassifierHead,
    j: int,
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
    target_class: int,
) -> Tensor:
    """
    Estimate the baseline E_alpha[E[y | do(z^j = alpha)]], alpha ~ Uniform(low^j, high^j).

    In Monte-Carlo mode alpha is the j-th column of the same K draws used by
    ``interventional_expectation``.
    """
    _validate(head, bounds, cfg, target_class)
    if j >= bounds.latent_dim:
        raise EstimatorError(f"coordinate {j} outside [0, {bounds.latent_dim})")

    if cfg.mode == EstimatorMode.ANALYTIC_AFFINE:
        weight, bias = head.affine_parameters()
        w = reshape(take_rows(weight, [target_class]), (bounds.latent_dim,))
        b_y = reshape(take_rows(bias, [target_class]), ())
        return add(total(mul(w, tensor(bounds.midpoint))), b_y)

    if cfg.mode == EstimatorMode.MONTE_CARLO:
        return _target_mean(head, tensor(_mc_draws(bounds, cfg)), target_class)

    return tensor(_quadrature_baseline(head, j, bounds, cfg, target_class))


def ace_value(
    head: ClassifierHead,
    j: int,
    alpha: "float | Tensor",
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
    target_class: int,
) -> Tensor:
    """
    ACE of do(z^j = alpha): interventional expectation minus baseline.

    Monte-Carlo mode averages paired differences over one set of draws.
    """
    _validate(head, bounds, cfg, target_class)
    a = _intervention(j, alpha, bounds.latent_dim)

    if cfg.mode == EstimatorMode.ANALYTIC_AFFINE:
        weight, _ = head.affine_parameters()
        w_j = reshape(take_rows(reshape(take_rows(weight, [target_class]), (bounds.latent_dim,)), [j]), ())
        return mul(w_j, sub(a, float(bounds.midpoint[j])))

    if cfg.mode == EstimatorMode.MONTE_CARLO:
        draws = _mc_draws(bounds, cfg)
        targets = np.full(draws.shape[0], target_class)
        intervened = pick(head(_intervened_rows(draws, j, a)), targets)
        baseline = pick(head(tensor(draws)), targets)
        return scale(total(sub(intervened, baseline)), 1.0 / draws.shape[0])

    grid = _inner_grid(bounds, j, cfg.inner_points)
    value = _expectation_values(head, grid, j, np.array([a.item()]), target_class)[0]
    return tensor(value - _quadrature_baseline(head, j, bounds, cfg, target_class))


def ace_profile(
    head: ClassifierHead,
    j: int,
    alphas: np.ndarray,
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
    target_class: int,
) -> np.ndarray:
    """
    ACE of coordinate j at every value in ``alphas``, values only.

    Args:
        head: Classifier head
        j: Latent coordinate
        alphas: 1-D array of intervened values
        bounds: Prior support
        cfg: Estimator configuration
        target_class: Output neuron

    Returns:
        Array of ACE values, one per alpha
    """
    _validate(head, bounds, cfg, target_class)
    if j >= bounds.latent_dim:
        raise EstimatorError(f"coordinate {j} outside [0, {bounds.latent_dim})")
    alphas = np.asarray(alphas, dtype=np.float64).ravel()
    if not np.all(np.isfinite(alphas)):
        raise ValueError("intervened values must be finite")

    if cfg.mode == EstimatorMode.ANALYTIC_AFFINE:
        weight, _ = head.affine_parameters()
        return weight.values[target_class, j] * (alphas - bounds.midpoint[j])

    if cfg.mode == EstimatorMode.MONTE_CARLO:
        draws = _mc_draws(bounds, cfg)
        with no_tape():
            baseline = float(head(tensor(draws)).values[:, target_class].mean())
        return _expectation_values(head, draws, j, alphas, target_class) - baseline

    grid = _inner_grid(bounds, j, cfg.inner_points)
    baseline = _quadrature_baseline(head, j, bounds, cfg, target_class)
    return _expectation_values(head, grid, j, alphas, target_class) - baseline


def _mc_ace_matrix(
    head: ClassifierHead,
    z: Tensor,
    targets: np.ndarray,
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
) -> Tensor:
    b, n = z.shape
    k = cfg.mc_samples
    draws = _mc_draws(bounds, cfg)

    # baseline: every coordinate drawn, shared by all j
    base_logits = head(tensor(draws))
    base_means = scale(sum_axis(base_logits, 0), 1.0 / k)
    base_per_sample = reshape(take_rows(base_means, targets), (b, 1))
    baseline = matmul(base_per_sample, ones((1, n)))

    per_chunk = max(1, ROWS_PER_CHUNK // (n * k))
    parts = []
    for start in range(0, b, per_chunk):
        samples = np.arange(start, min(b, start + per_chunk))
        rows = samples.size * n * k
        sample_of_row = np.repeat(samples, n * k)
        coord_of_row = np.tile(np.repeat(np.arange(n), k), samples.size)
        draw_of_row = np.tile(np.arange(k), samples.size * n)

        mask = np.zeros((rows, n), dtype=np.float64)
        mask[np.arange(rows), coord_of_row] = 1.0
        fixed = draws[draw_of_row] * (1.0 - mask)
        intervened = add(tensor(fixed), mul(take_rows(z, sample_of_row), tensor(mask)))

        picked = pick(head(intervened), targets[sample_of_row])
        means = scale(sum_axis(reshape(picked, (samples.size * n, k)), 1), 1.0 / k)
        parts.append(reshape(means, (samples.size, n)))

    return sub(concat(parts), baseline)


def ace_matrix(
    head: ClassifierHead,
    z: Tensor,
    targets: np.ndarray,
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
    diagnostics: AceDiagnostics | None = None,
) -> Tensor:
    """
    ACE vectors of a batch as one b x n tensor.

    Row i holds the ACE of every coordinate at alpha = z_i^j targeting class
    ``targets[i]``. Values outside the bounds are not clamped; they are
    counted in ``diagnostics``.

    Args:
        head: Classifier head
        z: Latent features (b x n)
        targets: Target class per row
        bounds: Prior support (treated as constants)
        cfg: Estimator configuration
        diagnostics: Optional counters to update

    Returns:
        Tensor (b x n); differentiable w.r.t. z and head parameters in
        analytic-affine and monte-carlo modes

    Raises:
        EstimatorError: If the estimator does not apply to this head
    """
    if z.ndim != 2 or z.shape[1] != bounds.latent_dim:
        raise DimensionError(f"ace_matrix expects b x {bounds.latent_dim} features, got {z.shape}")
    y = np.asarray(targets, dtype=np.int64)
    if y.shape != (z.shape[0],):
        raise DimensionError("ace_matrix needs one target class per row")
    if z.shape[0] == 0:
        raise EmptyBatchError("ace_matrix needs at least one sample")
    for t in np.unique(y):
        _validate(head, bounds, cfg, int(t))

    outside = int(np.count_nonzero((z.values < bounds.low) | (z.values > bounds.high)))
    if outside:
        logger.debug("%d intervened values fall outside their bounds", outside)
        if diagnostics is not None:
            diagnostics.out_of_bounds += outside

    if cfg.mode == EstimatorMode.ANALYTIC_AFFINE:
        weight, _ = head.affine_parameters()
        centre = np.broadcast_to(bounds.midpoint, z.shape).copy()
        return mul(take_rows(weight, y), sub(z, tensor(centre)))

    if cfg.mode == EstimatorMode.MONTE_CARLO:
        return _mc_ace_matrix(head, z, y, bounds, cfg)

    values = np.empty(z.shape, dtype=np.float64)
    for t in np.unique(y):
        rows = np.flatnonzero(y == t)
        for j in range(bounds.latent_dim):
            values[rows, j] = ace_profile(head, j, z.values[rows, j], bounds, cfg, int(t))
    return tensor(values)


def ace_vector(
    head: ClassifierHead,
    z_i: Tensor,
    target_class: int,
    bounds: FeatureBounds,
    cfg: AceEstimatorConfig,
    sample_id: int = 0,
) -> AceVector:
    """ACE vector of one sample: entry j is the ACE of do(z^j = z_i^j)."""
    n = bounds.latent_dim
    if z_i.size != n:
        raise DimensionError(f"latent vector has {z_i.size} entries, expected {n}")
    row = ace_matrix(head, reshape(z_i, (1, n)), np.array([target_class]), bounds, cfg)
    return AceVector(values=reshape(row, (n,)), target_class=target_class, sample_id=sample_id)
