# SPDX-License-Identifier: Apache-2.0
"""Normalization-gamma roles, decay plans and variance checks.

Architectures travel as JSON text; the helpers below return parsed
Python objects.
"""

import json

from . import _core
from ._core import (
    SimulationError,
    early_stage_variance,
    propagate_preact,
    propagate_v1,
    propagate_v1_closed_form,
    reset_downsample_preact,
    reset_downsample_v1,
    run_checks,
)

__all__ = [
    "SimulationError",
    "canonical",
    "early_stage_variance",
    "plan",
    "profile",
    "propagate_preact",
    "propagate_v1",
    "propagate_v1_closed_form",
    "reset_downsample_preact",
    "reset_downsample_v1",
    "role_counts",
    "roles",
    "run_checks",
    "simulate",
    "update_norm",
]

__version__ = "0.1.0"


def _text(arch):
    return arch if isinstance(arch, str) else json.dumps(arch)


def canonical(name, gamma=1.0):
    """Canonical architecture as a dict."""
    return json.loads(_core.canonical(name, gamma))


def role_counts(arch):
    return _core.role_counts(_text(arch))


def roles(arch):
    return _core.roles(_text(arch))


def plan(arch, lam=1e-4, policy="guidelines"):
    return json.loads(_core.plan(_text(arch), lam, policy))


def profile(arch, input_variance=1.0):
    return json.loads(_core.profile(_text(arch), input_variance))


def simulate(arch, batch=8192, trials=8, width=0, seed=0, input_variance=1.0):
    return json.loads(_core.simulate(_text(arch), batch, trials, width, seed, input_variance))


def update_norm(scales=(0.5, 1, 2, 4, 8), width=64, batch=1024, eta=1e-3, seed=0):
    return json.loads(_core.update_norm(list(scales), width, batch, eta, seed))
