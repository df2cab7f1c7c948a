import numpy as np
import pytest
import structlog
from structlog.testing import capture_logs

from ehnet.core.config import LoggingConfig
from ehnet.core.logging import LoggerMixin, _plain_numbers, level_for_verbosity, log_execution_time, setup_logging


@pytest.mark.parametrize("verbosity,expected", [(0, "WARNING"), (1, "INFO"), (2, "DEBUG"), (5, "DEBUG")])
def test_level_for_verbosity(verbosity, expected):
    assert level_for_verbosity(verbosity, "WARNING") == expected


def test_numpy_values_are_rendered_plainly():
    event = _plain_numbers(None, "info", {
        "loss": np.float64(0.5),
        "steps": np.int32(3),
        "small": np.arange(3),
        "large": np.zeros((4, 5), dtype=np.float32),
    })
    assert event["loss"] == 0.5 and type(event["loss"]) is float
    assert event["steps"] == 3 and type(event["steps"]) is int
    assert event["small"] == [0, 1, 2]
    assert event["large"] == "<float32 array (4, 5)>"


def test_execution_time_binds_the_operation():
    seen = {}

    @log_execution_time("demo_op")
    def work():
        seen.update(structlog.contextvars.get_contextvars())
        return 7

    with capture_logs() as logs:
        assert work() == 7
    assert seen["operation"] == "demo_op"
    assert "operation" not in structlog.contextvars.get_contextvars()
    assert logs[-1]["event"] == "operation finished" and "elapsed_ms" in logs[-1]


def test_execution_time_logs_failures():
    @log_execution_time("broken")
    def work():
        raise RuntimeError("boom")

    with capture_logs() as logs, pytest.raises(RuntimeError):
        work()
    assert logs[-1]["event"] == "operation failed"
    assert logs[-1]["error_type"] == "RuntimeError"


def test_mixin_binds_the_component():
    class Worker(LoggerMixin):
        pass

    with capture_logs() as logs:
        Worker().log_error("failed", error=ValueError("bad"), step=2)
    assert logs[0]["component"] == "Worker"
    assert logs[0]["error_type"] == "ValueError" and logs[0]["step"] == 2


def test_file_handler(tmp_path):
    path = tmp_path / "logs" / "ehnet.log"
    setup_logging(LoggingConfig(level="INFO", format="json", file_path=str(path)))
    try:
        structlog.get_logger("ehnet.test").info("hello", value=np.float32(1.5))
        assert "hello" in path.read_text(encoding="utf-8")
    finally:
        setup_logging(LoggingConfig())
