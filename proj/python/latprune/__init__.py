# Copyright 2026 The latprune Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Latency-aware token pruning for vision transformers.

The command functions mirror the ``latprune`` tool and return its JSON report
as a dict.
"""

import json

from latprune import _core
from latprune._core import (
    ConfigError,
    DimensionError,
    DivergenceError,
    Error,
    InfeasibleError,
    RangeError,
    ValidationError,
    block_flops,
    block_lat,
    phase_grouping,
    serialize_config,
    solve_budget,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "DivergenceError",
    "Error",
    "InfeasibleError",
    "RangeError",
    "ValidationError",
    "analyze",
    "block_flops",
    "block_lat",
    "latency",
    "phase_grouping",
    "plan",
    "run",
    "serialize_config",
    "solve_budget",
    "train",
]


def analyze(config="deit-t", **options):
    return json.loads(_core.analyze(config, **options))


def latency(config="deit-t", table="deit-t", **options):
    return json.loads(_core.latency(config, table, **options))


def plan(budget_ms, config="deit-t", table="deit-t", **options):
    return json.loads(_core.plan(config, table, budget_ms, **options))


def train(config="toy", **options):
    return json.loads(_core.train(config, **options))


def run(images, config="toy", **options):
    return json.loads(_core.run(config, images, **options))
