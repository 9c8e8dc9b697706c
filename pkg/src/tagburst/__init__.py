"""tagburst: genre-cluster discovery and self-exciting burst modeling for
tagged upload streams.

The pipeline: parse tagged events, cluster tags by co-occurrence, fit a
self-exciting point process per cluster, benchmark against Poisson-family
and ARIMA baselines by aic, forecast held-out counts, and attribute
activity to self-reinforcement, popularity, and exogenous factors.
"""

from .attribution import (AttributionReport, attribution_report, exo_score,
                          pop_score, self_score, triggering_probability)
from .baselines import (ArimaLiteParams, DriftParams, PCNHPPParams,
                        fit_arima_lite, fit_global_hawkes, fit_nhpp_drift,
                        fit_pc_nhpp, fit_poisson, forecast_arima)
from .forecast import (EvaluationTable, ForecastResult, SplitSpec, default_split,
                       evaluate_all, expected_count, holdout_log_likelihood,
                       mc_expected_count, split_stream)
from .hawkes import (FitResult, HawkesParams, compensator, fit_mle, intensity_at,
                     log_likelihood, log_likelihood_gradient, rescaled_residuals)
from .ingest import (Event, EventStream, ParseError, parse_events, validate_stream,
                     write_events)
from .simulate import (ClusterSpec, PopularityModel, SimConfig, make_synthetic_corpus,
                       simulate_hawkes, simulate_nhpp)
from .taggraph import (GenreCluster, TagGraph, assign_videos, build_affinity_graph,
                       connected_components, extract_clusters, prune_graph)

__version__ = "0.1.0"
