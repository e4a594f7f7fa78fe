import pytest

from corridor_profile.ingest import write_waypoints
from corridor_profile.route import write_route
from corridor_profile.synth import generate


@pytest.fixture
def write_scenario(tmp_path):
    """Generate a scenario and write its waypoints and route files."""
    counter = iter(range(1000))

    def _write(spec, workers=1):
        n = next(counter)
        result = generate(spec, workers=workers)
        waypoints = tmp_path / f"waypoints-{n}.csv"
        route = tmp_path / f"route-{n}.csv"
        write_waypoints(result.records(), waypoints)
        write_route(result.polylines.values(), route)
        return result, waypoints, route

    return _write
