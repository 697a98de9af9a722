"""
Unit tests for run logging.
"""
import logging

import pytest

from app.core.app_logging import (
    RunContextFilter,
    RunFormatter,
    get_logger,
    log_phase_completed,
    setup_logging,
)


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield root
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


def _record(**extra):
    record = logging.LogRecord("reqneg.test", logging.WARNING, __file__, 1, "message", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


class TestRunLogging:

    def test_log_file_carries_run_context(self, tmp_path, restore_root_logger):
        path = tmp_path / "logs" / "run.log"
        setup_logging("INFO", path)

        log_phase_completed("phase2", 7, 0.5, "completed")
        get_logger("reqneg.test").info("no context")
        for handler in restore_root_logger.handlers:
            handler.flush()

        lines = path.read_text(encoding="utf-8").splitlines()
        assert "[seed=7 phase=phase2] Phase completed" in lines[0]
        assert lines[0].endswith("Status: completed")
        assert "[seed=- phase=-] no context" in lines[1]

    def test_level_is_respected(self, tmp_path, restore_root_logger):
        path = tmp_path / "run.log"
        setup_logging("WARNING", path)

        get_logger("reqneg.test").info("hidden")
        get_logger("reqneg.test").warning("shown")
        for handler in restore_root_logger.handlers:
            handler.flush()

        text = path.read_text(encoding="utf-8")
        assert "hidden" not in text
        assert "shown" in text

    def test_filter_keeps_existing_context(self):
        record = _record(seed=3)
        assert RunContextFilter().filter(record)
        assert record.seed == 3
        assert record.phase == "-"

    def test_colors_do_not_leak_into_record(self):
        record = _record(seed=1, phase="phase1")
        formatter = RunFormatter("%(levelname)s %(message)s", colored=True)

        assert formatter.format(record).startswith("\033[33mWARNING\033[0m")
        assert record.levelname == "WARNING"
        assert RunFormatter("%(levelname)s %(message)s").format(record) == "WARNING message"
