"""Shared fixtures for the trusted pre-processing test suite."""

import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from trusted_preprocessing.adversary import install_seal_bypass
from trusted_preprocessing.metering import CostWeights
from trusted_preprocessing.models import AuxiliaryData, MetaData
from trusted_preprocessing.primitives import KeyRole, generate_keypair
from trusted_preprocessing.sensor import DEFAULT_TIMESTAMP, generate_batch, sign_batch

hypothesis_settings.register_profile(
    "default", max_examples=100, deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
hypothesis_settings.load_profile("default")


@pytest.fixture(autouse=True, scope="session")
def seal_bypass():
    from tests.enclave_hooks import bypass_seal

    install_seal_bypass(bypass_seal)
    yield bypass_seal
    install_seal_bypass(None)


def seed_bytes(n: int) -> bytes:
    return n.to_bytes(32, "big")


@pytest.fixture
def sensor_key():
    return generate_keypair(KeyRole.SENSOR, seed=seed_bytes(1))


@pytest.fixture
def other_sensor_key():
    return generate_keypair(KeyRole.SENSOR, seed=seed_bytes(2))


@pytest.fixture
def aux():
    return AuxiliaryData(threshold=50, scale_divisor=10)


@pytest.fixture
def weights():
    return CostWeights()


@pytest.fixture
def make_signed(sensor_key):
    """Factory: signed batch of ``size`` seeded values, sequence ``seq``."""

    def _make(size=4, seq=0, rng_seed=0, value_range=(-100, 100), key=None, sensor_id="sensor-0"):
        meta = MetaData(sensor_id, DEFAULT_TIMESTAMP + seq, seq)
        batch = generate_batch(size, value_range, rng_seed, meta)
        return sign_batch(batch, key or sensor_key)

    return _make


@pytest.fixture
def write_manifest(tmp_path):
    """Factory: write a workflow manifest under ``tmp_path`` and return its path."""

    def _write(backend="cs", batch_size=4, workflow_id=None, **extra):
        data = {
            "workflow_id": workflow_id or f"wf-{backend}",
            "backend": backend,
            "threshold": 50,
            "scale_divisor": 10,
            "batch_size": batch_size,
            **extra,
        }
        path = tmp_path / f"{data['workflow_id']}.json"
        path.write_text(json.dumps(data))
        return path

    return _write
