"""Categorical-field modeling with truncated bigaussians over colored
Voronoi truncation maps: max-entropy pattern fitting, simulated-annealing
map estimation, conditional simulation, and log-score validation."""

from .bme import (PATTERN_OFFSETS, AbsoluteContinuityViolation, NotConverged,
                  PatternPmf, PatternSpec, deming_stephan, entropy,
                  ipf_project, kl_divergence, load_marginals, load_pattern,
                  marginalize, save_marginals, save_pattern,
                  unit_lag_frequencies)
from .estimator import (AnnealResult, AnnealSchedule, MismatchConfig,
                        PriorSpec, anneal, metropolis_hastings, mismatch,
                        propose, read_trace, sample_prior, write_trace)
from .gaussgeom import (EmptyDomain, InfeasibleStart, Triangle, TriangleUnion,
                        sample_pair_in_union, sample_truncated_normal,
                        slice_u, slice_v, std_normal_cdf, triangle_mass)
from .grf import (CovarianceFactor, CovarianceModel, FactorizationFailure,
                  covariance_matrix, krige, load_covariance, save_covariance,
                  simulate_unconditional)
from .intervals import IntervalUnion
from .sampler import (Event, FeasibilityError, LatentState, UnmappableCategory,
                      assert_feasible, init_state, iter_conditional,
                      load_event, propagative_scan, run_conditional,
                      save_event, save_latent, standard_scan)
from .scoring import (PredictiveEstimate, ScoreReport, load_report, log_score,
                      predict_at, save_report, unordered_score)
from .tessellation import (CategoryRegions, DegenerateTessellation,
                           LengthMismatch, TruncationMap,
                           category_proportions, load_map, map_field,
                           map_point, save_map, triangulate)

__version__ = "0.1.0"
