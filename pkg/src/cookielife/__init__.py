"""Lifetime value of tracking cookies and the cost of lifetime restrictions.

The package turns a real-time-bidding impression log into a per-cookie
daily panel, corrects observed lifetimes for window censoring with a
parametric survival model, fits one price regression per cookie, and
simulates the revenue a publisher would lose if cookies were deleted and
reborn every L days. A seeded synthetic generator provides ground truth
for end-to-end verification.
"""

from .errors import (ConfigError, ConvergenceError, CookielifeError,
                     DataError, RowError, SchemaError)
from .panel import (CookieRecord, DailyObservation, ImpressionEvent,
                    build_daily_panel, lifetime_stats, parse_impressions,
                    sample_cookie_ids)
from .policysim import (CookiePolicyOutcome, LifetimeValuation, MarketImpact,
                        PolicyReport, RestrictionPolicy, aggregate_policy,
                        bootstrap_ci, extrapolate_market, predicted_price,
                        restricted_day, simulate_policy, value_lifetime,
                        valuation_rows)
from .survival import (CensoringStatus, SurvivalFit, ValidationReport,
                       classify_censoring, filter_survival_sample,
                       fit_survival, median_residual_lifetime,
                       residual_mean_lifetime, select_model,
                       select_newborn_cohort, survival_fn,
                       uncensor_lifetimes, validate_holdout)
from .synthgen import (GenConfig, GroundTruth, analytic_expected_loss,
                       generate)
from .valuemodel import (ModelSpec, QualityMetrics, QuantityFit,
                         ValueModelFit, classify_effect, describe_parameters,
                         fit_quantity_model, fit_value_model,
                         prediction_quality, winsorize_fits)

__version__ = "0.1.0"
