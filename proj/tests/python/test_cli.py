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


import json
import os
import pathlib
import shutil
import subprocess

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]


def cli():
    found = os.environ.get("LATPRUNE_CLI") or shutil.which("latprune")
    if found:
        return found
    local = ROOT / "build" / "latprune"
    if local.exists():
        return str(local)
    pytest.skip("latprune executable not found")


def invoke(*args):
    return subprocess.run([cli(), *args], capture_output=True, text=True)


def test_analyze_prints_report():
    p = invoke("analyze", "--config", "deit-t")
    assert p.returncode == 0
    report = json.loads(p.stdout)
    assert report["outputs"]["dense"]["total"] == 12 * 102049152


@pytest.mark.parametrize(
    "args, code",
    [
        (["latency", "--device", "deit-t", "--rate", "0.25"], 0),
        (["latency", "--device", "deit-t", "--rate", "0.6"], 2),
        (["analyze", "--config", "no-such-preset"], 2),
        (["run", "--config", "toy", "--mode", "sideways"], 2),
        (["plan", "--device", "deit-t", "--budget-ms", "5.0"], 3),
    ],
)
def test_exit_codes(args, code):
    assert invoke(*args).returncode == code


def test_infeasible_reports_minimum():
    p = invoke("plan", "--device", "deit-t", "--budget-ms", "5.0")
    assert json.loads(p.stdout)["min_latency_ms"] == pytest.approx(5.088)
