from paractive.engine.asynchronous import run_asynchronous
from paractive.engine.common import (
    ClusterConfig,
    RunRecord,
    make_learner,
    make_rule,
    read_errors,
    test_error,
    warmstart,
)
from paractive.engine.iwal import DelayModel, run_delayed_iwal, run_iwal
from paractive.engine.sync import run_sequential, run_synchronous

__all__ = [
    "ClusterConfig",
    "DelayModel",
    "RunRecord",
    "make_learner",
    "make_rule",
    "read_errors",
    "run_asynchronous",
    "run_delayed_iwal",
    "run_iwal",
    "run_sequential",
    "run_synchronous",
    "test_error",
    "warmstart",
]
