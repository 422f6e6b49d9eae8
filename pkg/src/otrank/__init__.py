"""Distribution-free multivariate rank tests via optimal transport.

Observations are ranked by optimally coupling the empirical sample to a
fixed reference grid; test statistics built on those ranks have null laws
that do not depend on the (absolutely continuous) data distribution.  The
package bundles the exact assignment solver, reference grids and scores,
the two-sample and independence statistics, permutation/asymptotic
calibration with a cached-null-table store, an efficiency-constant engine,
and a Monte-Carlo power harness, all behind the `otrank` CLI.
"""

from .assignment import (RankedSample, TiedDataError, brute_force_solve,
                         empirical_rank_map, jitter_duplicates, solve,
                         validate_optimality)
from .calibration import (NullTable, NullTableKey, asymptotic_cutoff,
                          default_cache_dir, grid_fingerprint,
                          permutation_null, resolve_threads,
                          run_independence_test, run_two_sample_test)
from .efficiency import (AreResult, ContaminationAre, KappaResult,
                         are_contamination, are_gaussian_uniform_erd,
                         are_general, are_noncentrality_spherical, are_table,
                         chernoff_savage_bound, elliptical_bound,
                         hodges_lehmann_bound, kappa_d)
from .reference import (NU_TAGS, SCORE_KINDS, ErdSpec, ReferenceGrid,
                        apply_score, build_grid, erd_covariance,
                        gaussian_grid, halton_grid, regular_grid_1d,
                        spherical_uniform_grid)
from .simulation import (FAMILIES, HlMatchReport, PowerCurve, ScenarioSpec,
                         epanechnikov_pdf, epanechnikov_quantile,
                         hl_sample_size_match, konijn_mix, konijn_power,
                         power_curve, sample_family)
from .statistics import (RankHotellingResult, TestReport, hotelling_t2,
                         rank_hotelling, rank_spearman, rdcov, scored_ranks,
                         wilks)
from .transport import (PopulationMap, RadialLaw, chi_radial,
                        elliptical_radial_map, exp_mixture_radial,
                        gaussian_to_gaussian_map, independent_components_map,
                        rank_convergence_error, student_t_radial,
                        uniform_radial)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # assignment
    "RankedSample", "TiedDataError", "brute_force_solve", "empirical_rank_map",
    "jitter_duplicates", "solve", "validate_optimality",
    # reference
    "NU_TAGS", "SCORE_KINDS", "ErdSpec", "ReferenceGrid", "apply_score",
    "build_grid", "erd_covariance", "gaussian_grid", "halton_grid",
    "regular_grid_1d", "spherical_uniform_grid",
    # statistics
    "RankHotellingResult", "TestReport", "hotelling_t2", "rank_hotelling",
    "rank_spearman", "rdcov", "scored_ranks", "wilks",
    # calibration
    "NullTable", "NullTableKey", "asymptotic_cutoff", "default_cache_dir",
    "grid_fingerprint", "permutation_null", "resolve_threads",
    "run_independence_test", "run_two_sample_test",
    # transport
    "PopulationMap", "RadialLaw", "chi_radial", "elliptical_radial_map",
    "exp_mixture_radial", "gaussian_to_gaussian_map",
    "independent_components_map", "rank_convergence_error", "student_t_radial",
    "uniform_radial",
    # efficiency
    "AreResult", "ContaminationAre", "KappaResult", "are_contamination",
    "are_gaussian_uniform_erd", "are_general", "are_noncentrality_spherical",
    "are_table", "chernoff_savage_bound", "elliptical_bound",
    "hodges_lehmann_bound", "kappa_d",
    # simulation
    "FAMILIES", "HlMatchReport", "PowerCurve", "ScenarioSpec",
    "epanechnikov_pdf", "epanechnikov_quantile", "hl_sample_size_match",
    "konijn_mix", "konijn_power", "power_curve", "sample_family",
]
