import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rdslab.cocycle import DrivingKind, DrivingSystem, MatrixCache
from rdslab.maps import FamilyKind, MapFamily, TrigPoly


@pytest.fixture(scope="session")
def doubling_family():
    """Exact doubling map, composed perturbation S = 0.2 sin(2 pi x)."""
    return MapFamily(
        FamilyKind.COMPOSED, 2, [TrigPoly()], [TrigPoly(sin=(0.2,))], 0.1
    )


@pytest.fixture(scope="session")
def drift_family():
    """T(x) = 2x + eps: Lebesgue measure invariant for every eps."""
    return MapFamily(
        FamilyKind.ADDITIVE, 2, [TrigPoly()], [TrigPoly(const=1.0)], 0.1
    )


@pytest.fixture(scope="session")
def bent_family():
    """Deterministic nonlinear reference map T(x) = 2x + 0.1 sin(2 pi x),
    composed perturbation."""
    return MapFamily(
        FamilyKind.COMPOSED, 2, [TrigPoly(sin=(0.1,))], [TrigPoly(sin=(0.2,))], 0.1
    )


@pytest.fixture(scope="session")
def default_family():
    """The shipped two-symbol random family."""
    return MapFamily(
        FamilyKind.COMPOSED,
        2,
        [TrigPoly(sin=(0.08,)), TrigPoly(sin=(-0.06,), cos=(0.03,))],
        [TrigPoly(sin=(0.08, 0.0), cos=(0.0, 0.016))],
        0.1,
    )


@pytest.fixture(scope="session")
def bernoulli2():
    return DrivingSystem(DrivingKind.BERNOULLI, 20260809, probs=(0.5, 0.5))


@pytest.fixture(scope="session")
def single_symbol():
    return DrivingSystem(DrivingKind.BERNOULLI, 7, probs=(1.0,))


@pytest.fixture(scope="session")
def rotation_driving():
    return DrivingSystem(DrivingKind.ROTATION, 20260809)


@pytest.fixture(scope="session")
def default_cache(default_family):
    return MatrixCache(default_family, 64, 8)


@pytest.fixture(scope="session")
def doubling_cache(doubling_family):
    return MatrixCache(doubling_family, 32, 8)


@pytest.fixture(scope="session")
def bent_cache(bent_family):
    return MatrixCache(bent_family, 64, 8)


@pytest.fixture(scope="session")
def drift_cache(drift_family):
    return MatrixCache(drift_family, 32, 8)


@pytest.fixture(scope="session")
def default_decay(default_cache, bernoulli2):
    from rdslab.cocycle import estimate_decay

    return estimate_decay(default_cache, bernoulli2, 0.0, 8, 30)
