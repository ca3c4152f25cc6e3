"""Two-part model sampling and the Monte-Carlo experiment harness.

Data are drawn from the two-part law (1 - theta) * delta_0 + theta *
Beta(alpha, beta) per group.  The harness reproduces three experiment
families: empirical Type-I error tables under a common null law, power
curves over a grid of sample sizes, and empirical relative efficiency of
the truncated vs standard two-sample statistics.

Reproducibility: replicate r draws from a Philox stream keyed (seed, r),
and the optional depth-reduction perturbation of replicate r draws from
(seed, r, 1), so rates are bit-identical for a fixed seed no matter how
replicates are batched and whether the perturbation arm is enabled.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateData, DegenerateVariance
from .k_sample import (
    McVarianceConfig,
    kruskal_wallis_standard,
    kruskal_wallis_truncated,
)
from .rank_core import GroupSample
from .rng import generator
from .two_sample import PLUG_IN, two_sample_stats, wilcoxon_standard, wilcoxon_truncated

log = logging.getLogger(__name__)

METHODS = ("w", "tw", "kw", "tkw")
DEPTH_SUFFIX = "+depth"


@dataclass(frozen=True)
class TwoPartSpec:
    """One group's law: zero with probability 1 - theta, else Beta(alpha, beta)."""

    theta: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not 0 <= self.theta <= 1:
            raise ValueError("theta must lie in [0, 1]")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Beta shape parameters must be positive")

    @property
    def shapes(self) -> tuple[float, float]:
        return (self.alpha, self.beta)


@dataclass(frozen=True)
class DepthReductionSpec:
    """Randomly zero small non-zero values, mimicking shallow sequencing.

    Values below the (2 * target_fraction)-quantile of a group's non-zero
    values are zeroed independently with probability zero_prob, so the
    expected zeroed share of non-zeros equals target_fraction at the
    default zero_prob = 0.5.
    """

    zero_prob: float = 0.5
    target_fraction: float = 0.05

    def __post_init__(self) -> None:
        if not 0 < self.zero_prob <= 1:
            raise ValueError("zero_prob must lie in (0, 1]")
        if not 0 < self.target_fraction < 0.5:
            raise ValueError("target_fraction must lie in (0, 0.5)")


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one simulation experiment.

    ``sizes`` is a flat list of per-group sizes for Type-I runs, or a list
    of per-group size lists (the grid) for power runs.
    """

    specs: tuple[TwoPartSpec, ...]
    sizes: tuple
    replicates: int
    alphas: tuple[float, ...] = (0.05,)
    methods: tuple[str, ...] = ()
    seed: int = 0
    depth_reduction: DepthReductionSpec | None = None
    mc_replicates: int = 10_000

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")
        if not self.alphas or any(not 0 < a <= 1 for a in self.alphas):
            raise ConfigError("alpha levels must lie in (0, 1]")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if len(self.specs) < 2:
            raise ConfigError("at least two group specs are required")


@dataclass(frozen=True)
class SimResult:
    """One output row: estimate plus binomial standard error."""

    method: str
    setting: str
    alpha_or_n: str
    estimate: float
    std_err: float


def sample_two_part(spec: TwoPartSpec, n: int, rng: np.random.Generator) -> GroupSample:
    """Draw n observations from the two-part law."""
    if n < 1:
        raise ValueError("n must be positive")
    values = np.zeros(n)
    mask = rng.random(n) < spec.theta
    k = int(mask.sum())
    if k:
        values[mask] = rng.beta(spec.alpha, spec.beta, size=k)
    return GroupSample(values)


def apply_depth_reduction(
    group: GroupSample, spec: DepthReductionSpec, rng: np.random.Generator
) -> GroupSample:
    """Zero small non-zero values with probability zero_prob.

    Existing zeros are untouched; a group with no non-zero values is
    returned unchanged (after consuming no randomness).
    """
    nonzero = group.values[group.values > 0]
    if nonzero.size == 0:
        return group
    threshold = np.quantile(nonzero, 2.0 * spec.target_fraction)
    eligible = (group.values > 0) & (group.values < threshold)
    zeroed = eligible & (rng.random(group.N) < spec.zero_prob)
    return GroupSample(np.where(zeroed, 0.0, group.values))


def _sample_groups(
    specs: Sequence[TwoPartSpec], sizes: Sequence[int], rng: np.random.Generator
) -> list[GroupSample]:
    return [sample_two_part(spec, n, rng) for spec, n in zip(specs, sizes)]


def _method_pvalue(method: str, groups: Sequence[GroupSample], mc: McVarianceConfig) -> float:
    if method == "w":
        if len(groups) != 2:
            raise ConfigError("method 'w' needs exactly two groups")
        return wilcoxon_standard(groups[0], groups[1]).p_value
    if method == "tw":
        if len(groups) != 2:
            raise ConfigError("method 'tw' needs exactly two groups")
        return wilcoxon_truncated(groups[0], groups[1], mc=mc).p_value
    if method == "kw":
        return kruskal_wallis_standard(groups).p_value
    if method == "tkw":
        return kruskal_wallis_truncated(groups, mc).p_value
    raise ConfigError(f"unknown method {method!r}")


def _describe(specs: Sequence[TwoPartSpec], extra: str = "") -> str:
    thetas = ",".join(f"{s.theta:g}" for s in specs)
    shapes = ",".join(f"{s.alpha:g}:{s.beta:g}" for s in specs)
    desc = f"theta={thetas};beta={shapes}"
    return f"{desc};{extra}" if extra else desc


def _check_method_arity(methods: Sequence[str], n_groups: int) -> None:
    for method in methods:
        if method in ("w", "tw") and n_groups != 2:
            raise ConfigError(f"method {method!r} needs exactly two groups")


def _simulate_pvalues(
    specs: Sequence[TwoPartSpec],
    sizes: Sequence[int],
    methods: Sequence[str],
    replicates: int,
    seed: int,
    mc: McVarianceConfig,
    depth_reduction: DepthReductionSpec | None,
    path: tuple[int, ...] = (),
) -> dict[str, np.ndarray]:
    """p-value arrays per method (and per depth-reduced method), NaN = degenerate."""
    arms = list(methods)
    if depth_reduction is not None:
        arms += [m + DEPTH_SUFFIX for m in methods]
    pvals = {m: np.full(replicates, np.nan) for m in arms}
    for rep in range(replicates):
        groups = _sample_groups(specs, sizes, generator(seed, *path, rep))
        for method in methods:
            try:
                pvals[method][rep] = _method_pvalue(method, groups, mc)
            except DegenerateData:
                pass
        if depth_reduction is not None:
            depth_rng = generator(seed, *path, rep, 1)
            reduced = [apply_depth_reduction(g, depth_reduction, depth_rng) for g in groups]
            for method in methods:
                try:
                    pvals[method + DEPTH_SUFFIX][rep] = _method_pvalue(method, reduced, mc)
                except DegenerateData:
                    pass
    for name, arr in pvals.items():
        bad = int(np.isnan(arr).sum())
        if bad:
            log.warning("%d of %d replicates degenerate for method %s", bad, replicates, name)
    return pvals


def _rejection_rows(
    pvals: dict[str, np.ndarray], alphas: Sequence[float], setting: str, key: str | None
) -> list[SimResult]:
    rows = []
    for method, arr in pvals.items():
        valid = arr[~np.isnan(arr)]
        for alpha in alphas:
            label = key if key is not None else f"{alpha:g}"
            sett = setting if key is None else f"{setting};alpha={alpha:g}"
            if valid.size == 0:
                rows.append(SimResult(method, sett, label, np.nan, np.nan))
                continue
            rate = float((valid <= alpha).mean())
            se = float(np.sqrt(rate * (1 - rate) / valid.size))
            rows.append(SimResult(method, sett, label, rate, se))
    return rows


def run_type1(config: ExperimentConfig) -> list[SimResult]:
    """Empirical Type-I error per method and alpha level under a common null law.

    All group specs must be identical; degenerate replicates are dropped from
    the denominator (and logged).
    """
    if len(set(config.specs)) != 1:
        raise ConfigError("type1 mode requires identical specs in every group")
    sizes = tuple(int(n) for n in config.sizes)
    if len(sizes) != len(config.specs):
        raise ConfigError("sizes and specs must have matching length")
    methods = config.methods or (("w", "tw") if len(sizes) == 2 else ("kw", "tkw"))
    _check_method_arity(methods, len(sizes))
    mc = McVarianceConfig(replicates=config.mc_replicates, seed=config.seed)
    pvals = _simulate_pvalues(
        config.specs, sizes, methods, config.replicates, config.seed, mc,
        config.depth_reduction,
    )
    setting = _describe(config.specs, "sizes=" + ",".join(map(str, sizes)))
    return _rejection_rows(pvals, config.alphas, setting, key=None)


def run_power(config: ExperimentConfig) -> list[SimResult]:
    """Empirical power over a grid of per-group size vectors.

    ``config.sizes`` holds one per-group size list per grid point.  With a
    depth-reduction spec configured, each method also gets a perturbed arm
    (method name suffixed ``+depth``) evaluated on the same replicates.
    """
    grid = [tuple(int(n) for n in sizes) for sizes in config.sizes]
    if not grid:
        raise ConfigError("power mode needs a non-empty size grid")
    for sizes in grid:
        if len(sizes) != len(config.specs):
            raise ConfigError("each grid entry must list one size per group")
    methods = config.methods or (("w", "tw") if len(grid[0]) == 2 else ("kw", "tkw"))
    _check_method_arity(methods, len(config.specs))
    mc = McVarianceConfig(replicates=config.mc_replicates, seed=config.seed)
    rows: list[SimResult] = []
    for point, sizes in enumerate(grid):
        pvals = _simulate_pvalues(
            config.specs, sizes, methods, config.replicates, config.seed, mc,
            config.depth_reduction, path=(point,),
        )
        rows.extend(
            _rejection_rows(
                pvals, config.alphas, _describe(config.specs),
                key=",".join(map(str, sizes)),
            )
        )
    return rows


@dataclass(frozen=True)
class EmpiricalAre:
    """Simulation estimate of the two-sample efficiency ratio.

    Ratio of (mean squared centered statistic under the alternative) /
    (null variance) between the truncated and standard statistics.  The
    null runs use the mean theta and group 1's continuous shape; under the
    null the rank distribution does not depend on the continuous part.
    ``std_err`` is a delta-method approximation treating the four moment
    estimates as independent.
    """

    estimate: float
    std_err: float
    mean_sq_trunc: float
    null_var_trunc: float
    mean_sq_full: float
    null_var_full: float
    replicates: int
    degenerate: int


def _relative_var_of_mean(samples: np.ndarray) -> float:
    mean = samples.mean()
    return float(samples.var(ddof=1) / (samples.size * mean**2)) if mean else 0.0


def _relative_var_of_variance(samples: np.ndarray) -> float:
    centered = samples - samples.mean()
    var = centered.var(ddof=1)
    m4 = float((centered**4).mean())
    return max(m4 / var**2 - 1.0, 0.0) / samples.size if var else 0.0


def run_empirical_are(
    spec1: TwoPartSpec,
    spec2: TwoPartSpec,
    sizes: Sequence[int],
    replicates: int = 10_000,
    seed: int = 0,
) -> EmpiricalAre:
    """Empirical efficiency of the truncated vs standard two-sample statistic.

    Draws ``replicates`` datasets under the alternative (spec1 vs spec2) for
    the numerator moments and the same number under the matched null for the
    variance denominators.
    """
    if replicates < 1000:
        raise ValueError("replicates must be at least 1000")
    if len(sizes) != 2:
        raise ValueError("two group sizes are required")
    n1, n2 = (int(s) for s in sizes)
    null_spec = TwoPartSpec(
        theta=(spec1.theta + spec2.theta) / 2.0, alpha=spec1.alpha, beta=spec1.beta
    )
    trunc_sq = []
    full_sq = []
    trunc_null = []
    full_null = []
    degenerate = 0
    for rep in range(replicates):
        rng = generator(seed, rep)
        x = sample_two_part(spec1, n1, rng)
        y = sample_two_part(spec2, n2, rng)
        try:
            stats = two_sample_stats(x, y, PLUG_IN)
            trunc_sq.append(stats.trunc_centered**2)
            full_sq.append(stats.full_centered**2)
        except DegenerateData:
            degenerate += 1
        rng0 = generator(seed, rep, 1)
        x0 = sample_two_part(null_spec, n1, rng0)
        y0 = sample_two_part(null_spec, n2, rng0)
        try:
            stats0 = two_sample_stats(x0, y0, PLUG_IN)
            trunc_null.append(stats0.trunc_centered)
            full_null.append(stats0.full_centered)
        except DegenerateData:
            degenerate += 1
    trunc_sq = np.asarray(trunc_sq)
    full_sq = np.asarray(full_sq)
    trunc_null = np.asarray(trunc_null)
    full_null = np.asarray(full_null)
    null_var_trunc = float(trunc_null.var(ddof=1))
    null_var_full = float(full_null.var(ddof=1))
    if null_var_trunc <= 0 or null_var_full <= 0:
        raise DegenerateVariance("null variance estimate is not positive")
    mean_sq_trunc = float(trunc_sq.mean())
    mean_sq_full = float(full_sq.mean())
    estimate = (mean_sq_trunc / null_var_trunc) / (mean_sq_full / null_var_full)
    rel_var = (
        _relative_var_of_mean(trunc_sq)
        + _relative_var_of_mean(full_sq)
        + _relative_var_of_variance(trunc_null)
        + _relative_var_of_variance(full_null)
    )
    return EmpiricalAre(
        estimate=estimate,
        std_err=abs(estimate) * float(np.sqrt(rel_var)),
        mean_sq_trunc=mean_sq_trunc,
        null_var_trunc=null_var_trunc,
        mean_sq_full=mean_sq_full,
        null_var_full=null_var_full,
        replicates=replicates,
        degenerate=degenerate,
    )


def load_config(path: str, mode: str) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON document.

    Keys: specs (list of {theta, alpha, beta}), sizes, replicates, alphas,
    methods, seed, depth_reduction ({zero_prob, target_fraction}),
    mc_replicates.  For power mode every entry of sizes must itself be a
    list of per-group sizes.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        specs = tuple(TwoPartSpec(**spec) for spec in raw["specs"])
        depth = raw.get("depth_reduction")
        config = ExperimentConfig(
            specs=specs,
            sizes=tuple(tuple(s) if isinstance(s, list) else int(s) for s in raw["sizes"]),
            replicates=int(raw["replicates"]),
            alphas=tuple(raw.get("alphas", (0.05,))),
            methods=tuple(raw.get("methods", ())),
            seed=int(raw.get("seed", 0)),
            depth_reduction=DepthReductionSpec(**depth) if depth else None,
            mc_replicates=int(raw.get("mc_replicates", 10_000)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulation config {path}: {exc}") from exc
    if mode == "power" and not all(isinstance(s, tuple) for s in config.sizes):
        raise ConfigError("power mode: every sizes entry must be a per-group list")
    if mode in ("type1", "are") and not all(isinstance(s, int) for s in config.sizes):
        raise ConfigError(f"{mode} mode: sizes must be a flat list of group sizes")
    return config


def run_are_mode(config: ExperimentConfig) -> list[SimResult]:
    """Empirical + theoretical efficiency rows for the CLI's ``are`` mode."""
    from .are_calc import are_two_sample, delta_fg_mc

    if len(config.specs) != 2:
        raise ConfigError("are mode requires exactly two specs")
    spec1, spec2 = config.specs
    result = run_empirical_are(
        spec1, spec2, config.sizes, replicates=config.replicates, seed=config.seed
    )
    delta = delta_fg_mc(spec1.shapes, spec2.shapes, seed=config.seed)
    theoretical = are_two_sample(spec1.theta, spec2.theta, delta)
    setting = _describe(config.specs, "sizes=" + ",".join(map(str, config.sizes)))
    return [
        SimResult("are_empirical", setting, "-", result.estimate, result.std_err),
        SimResult("are_theoretical", f"{setting};delta={delta:.4f}", "-", theoretical, 0.0),
    ]


def results_to_tsv(rows: Sequence[SimResult]) -> str:
    """Serialize result rows with a header line."""
    lines = ["method\tsetting\talpha_or_N\testimate\tstd_err"]
    for row in rows:
        lines.append(
            f"{row.method}\t{row.setting}\t{row.alpha_or_n}\t"
            f"{row.estimate:.6g}\t{row.std_err:.6g}"
        )
    return "\n".join(lines) + "\n"


def write_results(rows: Sequence[SimResult], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(results_to_tsv(rows))
