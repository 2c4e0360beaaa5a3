"""
Estimator Registry
Maps estimator identifiers to their pipelines; every pipeline takes
(train, test, settings, seed) and returns a result with theta_hat and diagnostics
"""

import logging
from dataclasses import dataclass, field

from .config import Config, EstimatorSettings
from .em_posterior import estimate_em_klr
from .errors import ValidationError
from .kde import estimate_kl_kde, estimate_pe_kde
from .kl_dr import estimate_kl_dr
from .pe_dr import estimate_pe_dr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineEstimate:
    theta_hat: object
    diagnostics: dict = field(default_factory=dict)


def estimate_train_prior(train, test, settings=None, seed=None):
    """No adaptation: θ̂ = n_y / n"""
    return BaselineEstimate(train.class_proportions)


ESTIMATORS = {
    "em-klr": estimate_em_klr,
    "kl-kde": estimate_kl_kde,
    "pe-kde": estimate_pe_kde,
    "kl-dr": estimate_kl_dr,
    "pe-dr": estimate_pe_dr,
    "train-prior": estimate_train_prior,
}


def resolve_estimators(selection):
    """Expand 'all' and comma-separated lists into registry names, order kept"""
    if isinstance(selection, str):
        selection = [selection]
    names = []
    for item in selection:
        for name in str(item).split(","):
            name = name.strip().lower()
            if not name:
                continue
            expanded = Config.ESTIMATORS if name == "all" else (name,)
            for entry in expanded:
                if entry not in ESTIMATORS:
                    raise ValidationError(
                        f"unknown estimator '{entry}' (choose from {', '.join(ESTIMATORS)}, all)"
                    )
                if entry not in names:
                    names.append(entry)
    if not names:
        raise ValidationError("no estimator selected")
    return tuple(names)


def run_estimator(name, train, test, settings=None, seed=None):
    """Run one registered estimator and return its result object"""
    if name not in ESTIMATORS:
        raise ValidationError(f"unknown estimator '{name}'")
    settings = settings or EstimatorSettings()
    logger.info("running %s on n=%d, n'=%d", name, train.n, test.n)
    result = ESTIMATORS[name](train, test, settings, seed)
    logger.info("%s estimate: %s", name, result.theta_hat.values.round(6).tolist())
    return result
