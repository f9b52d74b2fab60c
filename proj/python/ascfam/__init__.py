"""Retrospective joint analysis of a binary primary and a quantitative
secondary phenotype in ascertained family data."""

import csv
import io
import json
import os

from . import _core
from ._core import InputError, NumericalError, hwe_probs

__version__ = _core.__version__

__all__ = [
    "InputError",
    "NumericalError",
    "__version__",
    "default_scenario",
    "fit",
    "generate",
    "hwe_probs",
    "lrt",
    "mvn_prob",
    "simulate",
]


def fit(data, mode="snp", maf=None, covariates=None, free_delta=False, naive=False,
        null=False, threads=1, max_iterations=200):
    """Fit the retrospective model (or the naive model with ``naive=True``) to a
    pedigree CSV and return the report as a dict. With ``null=True`` the beta1 = 0
    model is fitted too and the report carries an ``lrt`` entry."""
    text = _core.fit_json(os.fspath(data), mode=mode, maf=maf, covariates=covariates,
                          free_delta=free_delta, naive=naive, null=null, threads=threads,
                          max_iterations=max_iterations)
    return json.loads(text)


def default_scenario():
    """The scenario with every field at its default, as a dict."""
    return json.loads(_core.default_scenario_json())


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def simulate(config):
    """Run a simulation scenario given as a dict (same keys as the JSON config).

    Returns a dict with ``summary`` and ``replicates`` (lists of CSV rows as dicts)
    and ``scenario`` (the resolved configuration)."""
    summary, replicates, resolved = _core.simulate_csv(json.dumps(config))
    return {
        "summary": _rows(summary),
        "replicates": _rows(replicates),
        "scenario": json.loads(resolved),
    }


def generate(config, replicate=0):
    """Pedigree CSV text of the simulated cohort for one replicate."""
    return _core.generate_csv(json.dumps(config), replicate)


def mvn_prob(mean, cov, lower=None, upper=None, accuracy=1e-6, seed=None):
    """P(lower <= X <= upper) for X ~ N(mean, cov); returns (probability, error)."""
    def to_list(v):
        return None if v is None else [float(x) for x in v]

    kwargs = {} if seed is None else {"seed": seed}
    return _core.rectangle_prob(to_list(mean), [to_list(r) for r in cov], to_list(lower),
                                to_list(upper), accuracy, **kwargs)


def lrt(loglik_full, loglik_null, df=1):
    """Likelihood ratio statistic and chi-square p-value."""
    return _core.lrt(loglik_full, loglik_null, df)
