"""Shared heavyweight runs and the acceptance verdict summary.

The scenario runs below are the expensive part of the suite (the n=400
fixed run and the n=100 pairs take minutes each), so they are built once
per session and dissected by the acceptance tests.  Fixtures that probe
failure modes catch ScenarioError and hand the tests a structured result
instead of erroring at setup time.
"""

import numpy as np
import pytest

from oromesh.orography import OrographySpec
from oromesh.scenarios import (
    ScenarioError,
    control_config,
    initial_adapted_mesh,
    run_scenario,
)

# ---------------------------------------------------------------------------
# acceptance verdict collection
# ---------------------------------------------------------------------------

_VERDICTS = {}


def _record_verdict(number, label, passed, detail=""):
    _VERDICTS[number] = (label, bool(passed), detail)


@pytest.fixture
def verdict():
    """Callable (number, label, passed, detail) recording one criterion."""
    return _record_verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        label, passed, detail = _VERDICTS[number]
        line = f"criterion {number} ({label}): {'PASS' if passed else 'FAIL'}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# scenario runs shared across tests
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def control_run():
    # the reference configuration: n=100, dt=0.5 s, smooth orography,
    # moving mesh with volume adjustment, one revolution (1200 steps)
    return run_scenario(control_config())


@pytest.fixture(scope="session")
def uniform_pair():
    """Uniform initial tracer on the moving mesh, with and without adjustment."""
    runs = {}
    for use_adjust in (True, False):
        cfg = control_config(
            name="uniform_adjusted" if use_adjust else "uniform_unadjusted",
            n=50,
            dt=1.0,
            initial_condition="uniform",
            use_volume_adjust=use_adjust,
        )
        runs[use_adjust] = run_scenario(cfg)
    return runs


@pytest.fixture(scope="session")
def two_revolution_run():
    return run_scenario(control_config(name="two_rev", n=50, dt=1.0, revolutions=2.0))


@pytest.fixture(scope="session")
def flat_moving_run():
    return run_scenario(
        control_config(name="flat_moving", n=50, dt=1.0, orography=OrographySpec(kind="flat"))
    )


def _loglog_slope(entries):
    log_dx = np.log([1.0 / n for n, _, _ in entries])
    log_err = np.log([err for _, _, err in entries])
    return float(np.polyfit(log_dx, log_err, 1)[0])


@pytest.fixture(scope="session")
def fixed_convergence():
    """Fixed uniform mesh over orography, n in {50,100,200,400}, dt = 50/n."""
    entries = []
    for n in (50, 100, 200, 400):
        cfg = control_config(name=f"fixed_n{n}", n=n, dt=50.0 / n, move_mesh=False)
        entries.append((n, cfg.dt, run_scenario(cfg).error))
    return {"entries": entries, "slope": _loglog_slope(entries)}


@pytest.fixture(scope="session")
def moving_convergence(control_run):
    """Moving mesh over orography, n in {50,100,200}; n=100 reuses control."""
    entries = []
    results = {}
    failure = None
    for n in (50, 100, 200):
        if n == 100:
            res = control_run
        else:
            try:
                res = run_scenario(control_config(name=f"moving_n{n}", n=n, dt=50.0 / n))
            except ScenarioError as exc:
                failure = (n, exc)
                break
        entries.append((n, 50.0 / n, res.error))
        results[n] = res
    slope = _loglog_slope(entries) if len(entries) >= 2 else None
    return {"entries": entries, "results": results, "failure": failure, "slope": slope}


@pytest.fixture(scope="session")
def steep_pair():
    """Full revolution over the cylinder cliffs, with and without adjustment."""
    steep = OrographySpec(kind="steep_cylinder")
    out = {"failure": None}
    out["adjusted"] = run_scenario(
        control_config(name="steep_adjusted", n=100, dt=0.5, orography=steep)
    )
    try:
        out["unadjusted"] = run_scenario(
            control_config(
                name="steep_unadjusted",
                n=100,
                dt=0.5,
                orography=steep,
                use_volume_adjust=False,
            )
        )
    except ScenarioError as exc:
        out["unadjusted"] = None
        out["failure"] = exc
    return out


@pytest.fixture(scope="session")
def initial_mesh_traces():
    """Newton traces of the 9-iteration initial mesh solve at three resolutions."""
    traces = {}
    for n in (50, 100, 200):
        cfg = control_config(name=f"initial_n{n}", n=n, dt=50.0 / n)
        _, _, trace = initial_adapted_mesh(cfg)
        traces[n] = trace
    return traces
