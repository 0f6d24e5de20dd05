"""Effect estimators and a name registry used by inference and simulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from ..dataset import PanelDataset
from ..design import CovariateForm
from ..errors import DataError
from .csdid import csdid
from .didint import didint
from .flex import flex
from .imputation import imputation
from .report import AttCell, EstimateReport
from .twfe import bacon_2x2, twfe

__all__ = [
    "AttCell",
    "EstimateReport",
    "EstimatorSpec",
    "REGISTRY",
    "bacon_2x2",
    "csdid",
    "didint",
    "flex",
    "imputation",
    "resolve",
    "twfe",
]


@dataclass(frozen=True)
class EstimatorSpec:
    """A named estimator call: ``func(data, **kwargs)``.

    ``lenient`` marks estimators that accept ``skip_uncontrolled`` so that
    resampling procedures can drop cells left without controls.
    """

    name: str
    func: Callable[..., EstimateReport]
    kwargs: dict = field(default_factory=dict)
    lenient: bool = False

    def run(self, data: PanelDataset, lenient: bool = False) -> EstimateReport:
        kw: dict[str, Any] = dict(self.kwargs)
        if lenient and self.lenient:
            kw["skip_uncontrolled"] = True
        return self.func(data, **kw)

    def __call__(self, data: PanelDataset) -> float:
        return self.run(data).overall_att


def _didint(form: CovariateForm) -> EstimatorSpec:
    return EstimatorSpec(f"didint-{form.value}", didint, {"form": form}, lenient=True)


REGISTRY: dict[str, EstimatorSpec] = {
    "twfe": EstimatorSpec("twfe", twfe, {"interacted": False}),
    "twfe-mod": EstimatorSpec("twfe-mod", twfe, {"interacted": True}),
    **{spec.name: spec for spec in (_didint(f) for f in CovariateForm)},
    "csdid": EstimatorSpec("csdid", csdid, {"adjustment": "none"}, lenient=True),
    "csdid-or": EstimatorSpec("csdid-or", csdid, {"adjustment": "outcome-regression"}, lenient=True),
    "csdid-ipw": EstimatorSpec("csdid-ipw", csdid, {"adjustment": "ipw"}, lenient=True),
    "csdid-dr": EstimatorSpec("csdid-dr", csdid, {"adjustment": "doubly-robust"}, lenient=True),
    "imputation": EstimatorSpec("imputation", imputation),
    "flex": EstimatorSpec("flex", flex),
}


def resolve(name: str) -> EstimatorSpec:
    """Look up an estimator by registry name (e.g. ``didint-two-way``).

    Short forms such as ``didint-twoway`` or ``didint-state`` are accepted.
    """
    key = name.strip().lower()
    aliases = {
        "twfe-modified": "twfe-mod",
        "didint-twoway": "didint-two-way",
        "didint-twooneway": "didint-two-one-way",
        "didint-state": "didint-state-varying",
        "didint-time": "didint-time-varying",
        "didint": "didint-two-way",
    }
    key = aliases.get(key, key)
    if key not in REGISTRY:
        raise DataError(f"unknown estimator {name!r}; choose from {', '.join(sorted(REGISTRY))}")
    return REGISTRY[key]
